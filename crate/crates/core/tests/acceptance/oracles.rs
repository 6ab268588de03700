//! Brute-force oracles written independently of the library code paths.

use std::collections::{BTreeSet, HashSet, VecDeque};

use ipc_core::invasion::SeedRegion;
use ipc_core::lattice::incident_edges;
use ipc_core::weightfield::{rank_to_weight, WeightSource, RANK_ONE};
use ipc_core::{Edge, InvasionTrace, Site, StopReason, StopRule};

/// Open edges of a small configuration; everything else is closed.
pub struct Config {
    open: HashSet<Edge>,
}

impl WeightSource for Config {
    fn rank(&self, e: Edge) -> u64 {
        if self.open.contains(&e) {
            RANK_ONE / 4
        } else {
            3 * RANK_ONE / 4
        }
    }
}

/// Edges of the box with `cols` x `rows` sites and corner at the origin.
fn grid_edges(cols: i32, rows: i32) -> Vec<Edge> {
    let mut out = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            if x + 1 < cols {
                out.push(Edge::horizontal(x, y));
            }
            if y + 1 < rows {
                out.push(Edge::vertical(x, y));
            }
        }
    }
    out
}

/// Left column joined to right column by open edges, by breadth-first search.
fn crosses(open: &HashSet<Edge>, cols: i32, rows: i32) -> bool {
    let inside = |s: Site| s.x >= 0 && s.x < cols && s.y >= 0 && s.y < rows;
    let mut seen: HashSet<Site> = (0..rows).map(|y| Site::new(0, y)).collect();
    let mut queue: VecDeque<Site> = seen.iter().copied().collect();
    while let Some(s) = queue.pop_front() {
        if s.x == cols - 1 {
            return true;
        }
        for e in incident_edges(s) {
            let t = if e.a == s { e.b() } else { e.a };
            if inside(t) && open.contains(&e) && seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    false
}

/// Exact left-right crossing probability of the 2 x 2 site square.
pub fn unit_square_crossing(p: f64) -> f64 {
    let edges = grid_edges(2, 2);
    let mut total = 0.0;
    for mask in 0u32..1 << edges.len() {
        let open: HashSet<Edge> = edges.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
        if crosses(&open, 2, 2) {
            let k = open.len() as i32;
            total += p.powi(k) * (1.0 - p).powi(edges.len() as i32 - k);
        }
    }
    total
}

/// Runs over all configurations of the `cols` x `rows` site box. Returns
/// the number that cross, the total, and how often `library` disagrees.
pub fn enumerate_rectangle(cols: u32, rows: u32, library: impl Fn(&Config) -> bool) -> (u64, u64, u64) {
    let (c, r) = (cols as i32, rows as i32);
    let edges = grid_edges(c, r);
    let (mut crossed, mut disagree) = (0, 0);
    for mask in 0u64..1 << edges.len() {
        let open = edges.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
        let config = Config { open };
        let oracle = crosses(&config.open, c, r);
        crossed += oracle as u64;
        disagree += (oracle != library(&config)) as u64;
    }
    (crossed, 1 << edges.len(), disagree)
}

/// Strict suffix maxima above `threshold`, by comparing each entry with
/// every later one.
pub fn outlets_quadratic(trace: &InvasionTrace, threshold: f64) -> Vec<(u64, Edge, f64)> {
    let e = &trace.entries;
    (0..e.len())
        .filter(|&i| e[i].weight > threshold && e[i + 1..].iter().all(|later| later.weight < e[i].weight))
        .map(|i| (e[i].step, e[i].edge, e[i].weight))
        .collect()
}

#[derive(Debug)]
pub struct ReplayError {
    pub step: u64,
    pub what: String,
}

impl std::fmt::Display for ReplayError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {}: {}", self.step, self.what)
    }
}

/// Re-runs the invasion from the origin with an ordered set of
/// `(rank, edge)` pairs and compares every step, then the stop.
pub fn greedy_replay<W: WeightSource>(trace: &InvasionTrace, weights: &W, radius: u32) -> Result<(), ReplayError> {
    let fail = |step: u64, what: String| Err(ReplayError { step, what });
    if trace.config.seed_region != SeedRegion::Origin || trace.config.stop != StopRule::Radius(radius) {
        return fail(0, format!("unexpected config {:?}", trace.config));
    }
    let origin = Site::new(0, 0);
    let mut sites: HashSet<Site> = HashSet::from([origin]);
    let mut invaded: HashSet<Edge> = HashSet::new();
    let mut boundary: BTreeSet<(u64, Edge)> = incident_edges(origin).iter().map(|&e| (weights.rank(e), e)).collect();
    let mut reach = 0;
    for (i, entry) in trace.entries.iter().enumerate() {
        let step = i as u64 + 1;
        if reach >= radius {
            return fail(step, "trace continues past the stop radius".into());
        }
        let Some((rank, edge)) = boundary.pop_first() else { return fail(step, "boundary is empty".into()) };
        if entry.step != step || entry.edge != edge || entry.weight != rank_to_weight(rank) {
            return fail(step, format!("trace has {entry:?}, greedy choice is {edge} at rank {rank}"));
        }
        invaded.insert(edge);
        for s in [edge.a, edge.b()] {
            if sites.insert(s) {
                reach = reach.max(s.chebyshev());
                for e in incident_edges(s) {
                    if !invaded.contains(&e) {
                        boundary.insert((weights.rank(e), e));
                    }
                }
            }
        }
    }
    let n = trace.entries.len() as u64;
    if reach < radius || trace.stop_reason != StopReason::RadiusHit {
        return fail(n, format!("stopped at reach {reach} with {:?}", trace.stop_reason));
    }
    if trace.invaded_sites.len() != sites.len() || !sites.iter().all(|s| trace.invaded_sites.contains(*s)) {
        return fail(n, format!("{} invaded sites, replay has {}", trace.invaded_sites.len(), sites.len()));
    }
    Ok(())
}
