//! Exhaustive duality check on a small annulus.
//!
//! `Ann(1, 3)` has 60 edges, so its configurations are covered through four
//! rotated quarters. Each quarter's 2^15 configurations fall into classes by
//! the connectivity they induce on the sites and faces shared with other
//! quarters (open edges join sites, closed edges join faces). Every event
//! checked below is a function of the tuple of quarter classes, so testing
//! one configuration per tuple covers all 2^60.

use std::collections::BTreeMap;

use ipc_core::bernoulli::{annulus_open_crossing, closed_dual_circuit_in_annulus, open_circuit_in_annulus};
use ipc_core::lattice::edges_in_box;
use ipc_core::weightfield::{WeightSource, RANK_ONE};
use ipc_core::{Edge, Orientation, Region, Site};

pub const INNER: u32 = 1;
pub const OUTER: u32 = 3;
const SIDE: i32 = 2 * OUTER as i32 + 1;

/// Open/closed configuration on `B(OUTER)`, indexed arithmetically.
#[derive(Clone)]
pub struct Bits {
    open: [bool; (SIDE * SIDE * 2) as usize],
}

fn slot(e: Edge) -> usize {
    let o = OUTER as i32;
    let base = ((e.a.x + o) * SIDE + (e.a.y + o)) * 2;
    (base + (e.orientation == Orientation::Horizontal) as i32) as usize
}

impl Bits {
    pub fn closed() -> Self {
        Bits { open: [false; (SIDE * SIDE * 2) as usize] }
    }

    pub fn is_open(&self, e: Edge) -> bool {
        self.open[slot(e)]
    }

    pub fn set(&mut self, e: Edge, open: bool) {
        self.open[slot(e)] = open;
    }
}

impl WeightSource for Bits {
    // Open edges sit below p = 1/2, closed ones above.
    fn rank(&self, e: Edge) -> u64 {
        if self.open[slot(e)] {
            RANK_ONE / 4
        } else {
            3 * RANK_ONE / 4
        }
    }
}

pub fn annulus_edges() -> Vec<Edge> {
    let ann = Region::annulus(INNER, OUTER);
    edges_in_box(OUTER).filter(|e| ann.contains_edge(*e)).collect()
}

/// Doubled midpoint of an edge.
fn mid2(e: Edge) -> (i32, i32) {
    let b = e.b();
    (e.a.x + b.x, e.a.y + b.y)
}

/// Quarter of the plane minus the origin; rotation by 90 degrees maps
/// quarter `q` onto `q + 1`.
pub fn quarter(e: Edge) -> usize {
    let (x, y) = mid2(e);
    match (x, y) {
        _ if x > 0 && y >= 0 => 0,
        _ if x <= 0 && y > 0 => 1,
        _ if x < 0 && y <= 0 => 2,
        _ => 3,
    }
}

/// Faces on either side of an edge, in doubled coordinates.
fn faces(e: Edge) -> [(i32, i32); 2] {
    let d = e.dual();
    [(d.a.x2, d.a.y2), (d.b.x2, d.b.y2)]
}

/// Dual node of a face: the hole, infinity, or a face of the ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Face {
    Hole,
    Out,
    Ring(i32, i32),
}

fn face(f: (i32, i32)) -> Face {
    let n = f.0.abs().max(f.1.abs());
    if n <= 2 * INNER as i32 + 1 {
        Face::Hole
    } else if n > 2 * OUTER as i32 {
        Face::Out
    } else {
        Face::Ring(f.0, f.1)
    }
}

// ---------------------------------------------------------------- oracles

/// One annulus edge with its endpoints and faces as small indices.
struct Link {
    edge: Edge,
    u: usize,
    v: usize,
    /// Crosses the ray `y = 1/2, x > 0` (the edges `V(x, 0)`, `x > 0`).
    flip: bool,
    f: usize,
    g: usize,
    /// Dual step crosses the ray `y = 0, x > 0` (the edges `H(x, 0)`, `x > 0`).
    dual_flip: bool,
}

/// Independent event oracles on the annulus graph and its dual. Circuits
/// around the origin are detected on double covers whose sheet flips across
/// a ray from the origin: a site joined to its own copy on the other sheet
/// lies on a closed walk with odd winding.
pub struct Oracles {
    links: Vec<Link>,
    sites: Vec<Site>,
    /// Index 0 is the hole, 1 infinity, the rest ring faces.
    faces: usize,
}

const HOLE: usize = 0;
const OUT: usize = 1;

impl Oracles {
    pub fn new(edges: &[Edge]) -> Self {
        let mut sites: Vec<Site> = edges.iter().flat_map(|e| [e.a, e.b()]).collect();
        sites.sort();
        sites.dedup();
        let mut ring: Vec<Face> = edges.iter().flat_map(|e| faces(*e).map(face)).filter(|f| matches!(f, Face::Ring(..))).collect();
        ring.sort();
        ring.dedup();
        let fidx = |f: Face| match f {
            Face::Hole => HOLE,
            Face::Out => OUT,
            r => 2 + ring.binary_search(&r).unwrap(),
        };
        let links = edges
            .iter()
            .map(|&e| {
                let [f, g] = faces(e).map(face);
                Link {
                    edge: e,
                    u: sites.binary_search(&e.a).unwrap(),
                    v: sites.binary_search(&e.b()).unwrap(),
                    flip: e.orientation == Orientation::Vertical && e.a.y == 0 && e.a.x > 0,
                    f: fidx(f),
                    g: fidx(g),
                    dual_flip: e.orientation == Orientation::Horizontal && e.a.y == 0 && e.a.x > 0,
                }
            })
            .collect();
        Oracles { links, faces: 2 + ring.len(), sites }
    }

    /// Open circuit around the origin on annulus edges.
    pub fn open_circuit(&self, c: &Bits) -> bool {
        let n = self.sites.len();
        let mut p: Vec<usize> = (0..2 * n).collect();
        for l in self.links.iter().filter(|l| c.is_open(l.edge)) {
            for sheet in 0..2 {
                let other = sheet ^ l.flip as usize;
                union(&mut p, l.u + sheet * n, l.v + other * n);
            }
        }
        (0..n).any(|s| find(&mut p, s) == find(&mut p, s + n))
    }

    /// Closed dual circuit around the origin through ring faces only.
    pub fn closed_dual_circuit(&self, c: &Bits) -> bool {
        let n = self.faces;
        let mut p: Vec<usize> = (0..2 * n).collect();
        for l in self.links.iter().filter(|l| !c.is_open(l.edge) && l.f >= 2 && l.g >= 2) {
            for sheet in 0..2 {
                let other = sheet ^ l.dual_flip as usize;
                union(&mut p, l.f + sheet * n, l.g + other * n);
            }
        }
        (2..n).any(|f| find(&mut p, f) == find(&mut p, f + n))
    }

    /// Closed dual path from the hole to infinity across closed annulus edges.
    pub fn closed_dual_crossing(&self, c: &Bits) -> bool {
        let mut p: Vec<usize> = (0..self.faces).collect();
        for l in self.links.iter().filter(|l| !c.is_open(l.edge)) {
            union(&mut p, l.f, l.g);
        }
        find(&mut p, HOLE) == find(&mut p, OUT)
    }

    /// Open path on annulus edges from `∂B(INNER + 1)` to `∂B(OUTER)`.
    pub fn open_crossing(&self, c: &Bits) -> bool {
        let n = self.sites.len();
        // Two extra nodes for the inner and outer rings.
        let mut p: Vec<usize> = (0..n + 2).collect();
        for (i, s) in self.sites.iter().enumerate() {
            if s.chebyshev() == INNER + 1 {
                union(&mut p, i, n);
            }
            if s.chebyshev() == OUTER {
                union(&mut p, i, n + 1);
            }
        }
        for l in self.links.iter().filter(|l| c.is_open(l.edge)) {
            union(&mut p, l.u, l.v);
        }
        find(&mut p, n) == find(&mut p, n + 1)
    }

    /// Every relation the duality partition asserts, on one configuration.
    /// Returns a description of the first violation.
    pub fn check(&self, c: &Bits) -> Result<(), String> {
        let circuit = open_circuit_in_annulus(c, 0.5, INNER, OUTER);
        let dual_circuit = closed_dual_circuit_in_annulus(c, 0.5, INNER, OUTER);
        let crossing = annulus_open_crossing(c, 0.5, INNER, OUTER);
        let o_circuit = self.open_circuit(c);
        let o_dual_crossing = self.closed_dual_crossing(c);
        let o_dual_circuit = self.closed_dual_circuit(c);
        let o_crossing = self.open_crossing(c);
        let ok = circuit == o_circuit
            && o_circuit != o_dual_crossing
            && dual_circuit == o_dual_circuit
            && o_dual_circuit != o_crossing
            && crossing == o_crossing;
        if ok {
            return Ok(());
        }
        let open: Vec<String> = self.links.iter().filter(|l| c.is_open(l.edge)).map(|l| l.edge.to_string()).collect();
        Err(format!(
            "open {open:?}: circuit {circuit}/{o_circuit} dual crossing {o_dual_crossing}; \
             dual circuit {dual_circuit}/{o_dual_circuit} crossing {crossing}/{o_crossing}"
        ))
    }
}

fn union(p: &mut [usize], a: usize, b: usize) {
    let (a, b) = (find(p, a), find(p, b));
    p[a] = b;
}

// ---------------------------------------------------------- quarter classes

/// Union-find over a handful of labels.
pub fn find(p: &mut [usize], mut i: usize) -> usize {
    while p[i] != i {
        p[i] = p[p[i]];
        i = p[i];
    }
    i
}

struct Quarter {
    edges: Vec<Edge>,
    /// Sites shared with another quarter.
    port_sites: Vec<Site>,
    /// Faces shared with another quarter, hole and infinity included.
    port_faces: Vec<Face>,
}

impl Quarter {
    /// Class of a configuration of this quarter's edges (bit i of `mask`
    /// opens edge i): the partition of port sites by open paths, which of
    /// them reach each ring, whether the quarter crosses on its own, and
    /// the partitions of port faces by closed dual paths, with and without
    /// passing through the hole or infinity.
    fn class(&self, mask: u32) -> Vec<u8> {
        let mut sites: Vec<Site> = self.edges.iter().flat_map(|e| [e.a, e.b()]).collect();
        sites.sort();
        sites.dedup();
        let mut fs: Vec<Face> = self.edges.iter().flat_map(|e| faces(*e).map(face)).collect();
        fs.sort();
        fs.dedup();
        let si = |s: Site| sites.binary_search(&s).unwrap();
        let fi = |f: Face| fs.binary_search(&f).unwrap();
        let mut ps: Vec<usize> = (0..sites.len()).collect();
        let mut pf: Vec<usize> = (0..fs.len()).collect();
        // Closed dual paths through ring faces only.
        let mut pr: Vec<usize> = (0..fs.len()).collect();
        for (i, e) in self.edges.iter().enumerate() {
            if mask >> i & 1 == 1 {
                let (a, b) = (find(&mut ps, si(e.a)), find(&mut ps, si(e.b())));
                ps[a] = b;
            } else {
                let [f, g] = faces(*e).map(face);
                let (a, b) = (find(&mut pf, fi(f)), find(&mut pf, fi(g)));
                pf[a] = b;
                if matches!((f, g), (Face::Ring(..), Face::Ring(..))) {
                    let (a, b) = (find(&mut pr, fi(f)), find(&mut pr, fi(g)));
                    pr[a] = b;
                }
            }
        }
        let mut touches = vec![[false; 2]; sites.len()];
        for (i, s) in sites.iter().enumerate() {
            let r = find(&mut ps, i);
            touches[r][(s.chebyshev() == OUTER) as usize] = true;
        }
        let crosses = touches.iter().any(|t| t[0] && t[1]);
        let mut key = vec![crosses as u8];
        let mut label = BTreeMap::new();
        for s in &self.port_sites {
            let r = find(&mut ps, si(*s));
            let next = label.len() as u8;
            key.push(*label.entry(r).or_insert(next));
            key.push(touches[r][0] as u8 | (touches[r][1] as u8) << 1);
        }
        let mut label = BTreeMap::new();
        for f in &self.port_faces {
            let r = find(&mut pf, fi(*f));
            let next = label.len() as u8;
            key.push(*label.entry(r).or_insert(next));
        }
        let mut label = BTreeMap::new();
        for f in self.port_faces.iter().filter(|f| matches!(f, Face::Ring(..))) {
            let r = find(&mut pr, fi(*f));
            let next = label.len() as u8;
            key.push(*label.entry(r).or_insert(next));
        }
        key
    }
}

fn quarters(edges: &[Edge]) -> Vec<Quarter> {
    let mut site_q: BTreeMap<Site, u8> = BTreeMap::new();
    let mut face_q: BTreeMap<Face, u8> = BTreeMap::new();
    for e in edges {
        let bit = 1u8 << quarter(*e);
        for s in [e.a, e.b()] {
            *site_q.entry(s).or_default() |= bit;
        }
        for f in faces(*e).map(face) {
            *face_q.entry(f).or_default() |= bit;
        }
    }
    (0..4)
        .map(|q| {
            let own: Vec<Edge> = edges.iter().copied().filter(|e| quarter(*e) == q).collect();
            let bit = 1u8 << q;
            let port_sites = site_q.iter().filter(|(_, m)| **m & bit != 0 && m.count_ones() > 1).map(|(s, _)| *s).collect();
            let port_faces = face_q
                .iter()
                .filter(|(f, m)| **m & bit != 0 && (m.count_ones() > 1 || matches!(f, Face::Hole | Face::Out)))
                .map(|(f, _)| *f)
                .collect();
            Quarter { edges: own, port_sites, port_faces }
        })
        .collect()
}

/// Outcome of the quarter-class sweep.
#[derive(Debug)]
pub struct Sweep {
    pub edges: usize,
    pub classes: [usize; 4],
    pub tuples: u64,
    pub circuits: u64,
    pub dual_circuits: u64,
    pub failure: Option<String>,
}

/// Checks one configuration per tuple of quarter classes. Representatives
/// alternate between the first and last member of each class.
pub fn sweep() -> Sweep {
    let edges = annulus_edges();
    let qs = quarters(&edges);
    let reps: Vec<Vec<[u32; 2]>> = qs
        .iter()
        .map(|q| {
            assert!(q.edges.len() < 32);
            let mut by_class: BTreeMap<Vec<u8>, [u32; 2]> = BTreeMap::new();
            for mask in 0..1u32 << q.edges.len() {
                by_class.entry(q.class(mask)).and_modify(|r| r[1] = mask).or_insert([mask, mask]);
            }
            by_class.into_values().collect()
        })
        .collect();
    let classes = [reps[0].len(), reps[1].len(), reps[2].len(), reps[3].len()];
    let oracles = Oracles::new(&edges);
    let mut out = Sweep { edges: edges.len(), classes, tuples: 0, circuits: 0, dual_circuits: 0, failure: None };
    let mut c = Bits::closed();
    let mut idx = [0usize; 4];
    loop {
        let pick = out.tuples as usize;
        for q in 0..4 {
            let mask = reps[q][idx[q]][(pick >> q) & 1];
            for (i, e) in qs[q].edges.iter().enumerate() {
                c.set(*e, mask >> i & 1 == 1);
            }
        }
        if let Err(e) = oracles.check(&c) {
            out.failure = Some(e);
            return out;
        }
        out.circuits += open_circuit_in_annulus(&c, 0.5, INNER, OUTER) as u64;
        out.dual_circuits += closed_dual_circuit_in_annulus(&c, 0.5, INNER, OUTER) as u64;
        out.tuples += 1;
        let mut q = 0;
        loop {
            idx[q] += 1;
            if idx[q] < reps[q].len() {
                break;
            }
            idx[q] = 0;
            q += 1;
            if q == 4 {
                return out;
            }
        }
    }
}

fn events(c: &Bits) -> [bool; 3] {
    [
        open_circuit_in_annulus(c, 0.5, INNER, OUTER),
        closed_dual_circuit_in_annulus(c, 0.5, INNER, OUTER),
        annulus_open_crossing(c, 0.5, INNER, OUTER),
    ]
}

/// Confirms on random configurations that the quarter classes determine
/// the events: replacing each quarter by the first member of its class
/// leaves all three events unchanged.
pub fn reduction_check(master: u64, samples: u64) -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let edges = annulus_edges();
    let qs = quarters(&edges);
    let firsts: Vec<BTreeMap<Vec<u8>, u32>> = qs
        .iter()
        .map(|q| {
            let mut m = BTreeMap::new();
            for mask in 0..1u32 << q.edges.len() {
                m.entry(q.class(mask)).or_insert(mask);
            }
            m
        })
        .collect();
    let oracles = Oracles::new(&edges);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(master);
    for i in 0..samples {
        let mut c = Bits::closed();
        let mut rep = Bits::closed();
        for (q, quarter) in qs.iter().enumerate() {
            let mask: u32 = rng.gen_range(0..1u32 << quarter.edges.len());
            let first = firsts[q][&quarter.class(mask)];
            for (j, e) in quarter.edges.iter().enumerate() {
                c.set(*e, mask >> j & 1 == 1);
                rep.set(*e, first >> j & 1 == 1);
            }
        }
        oracles.check(&c).map_err(|e| format!("sample {i}: {e}"))?;
        if events(&c) != events(&rep) {
            return Err(format!("sample {i}: events {:?} but class representative gives {:?}", events(&c), events(&rep)));
        }
    }
    Ok(())
}
