//! Geometry of the square lattice `Z^2` and its dual.
//!
//! Sites are integer points, edges are nearest-neighbour pairs stored in a
//! canonical form (left or bottom endpoint first). Dual points live on
//! `(1/2, 1/2) + Z^2` and are stored with doubled integer coordinates so all
//! arithmetic stays exact.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("sites {0} and {1} are not nearest neighbours")]
    NotAdjacent(Site, Site),
    #[error("malformed edge encoding {0:?}")]
    BadEncoding(String),
    #[error("coordinate out of the packable range: {0}")]
    OutOfRange(Site),
}

/// A site of `Z^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    /// Chebyshev norm `max(|x|, |y|)`.
    #[inline]
    pub fn chebyshev(self) -> u32 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }

    /// Neighbours in the fixed order east, north, west, south.
    #[inline]
    pub fn neighbours(self) -> [Site; 4] {
        [
            Site::new(self.x + 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x - 1, self.y),
            Site::new(self.x, self.y - 1),
        ]
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Chebyshev norm of a site.
#[inline]
pub fn chebyshev(s: Site) -> u32 {
    s.chebyshev()
}

/// Orientation of a primal edge. `Vertical` sorts before `Horizontal` so that
/// the derived ordering on [`Edge`] agrees with lexicographic order of the
/// endpoint pair `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Vertical,
    Horizontal,
}

/// A nearest-neighbour edge in canonical form: `a` is the left (horizontal)
/// or bottom (vertical) endpoint, which is also the lexicographically smaller
/// one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: Site,
    pub orientation: Orientation,
}

const PACK_OFFSET: i64 = 1 << 30;

impl Edge {
    pub const fn horizontal(x: i32, y: i32) -> Self {
        Edge { a: Site::new(x, y), orientation: Orientation::Horizontal }
    }

    pub const fn vertical(x: i32, y: i32) -> Self {
        Edge { a: Site::new(x, y), orientation: Orientation::Vertical }
    }

    /// Build the canonical edge joining two adjacent sites, in either order.
    pub fn between(s: Site, t: Site) -> Result<Self, LatticeError> {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        match (hi.x - lo.x, hi.y - lo.y) {
            (1, 0) => Ok(Edge::horizontal(lo.x, lo.y)),
            (0, 1) => Ok(Edge::vertical(lo.x, lo.y)),
            _ => Err(LatticeError::NotAdjacent(s, t)),
        }
    }

    /// The right (horizontal) or top (vertical) endpoint.
    #[inline]
    pub fn b(self) -> Site {
        match self.orientation {
            Orientation::Horizontal => Site::new(self.a.x + 1, self.a.y),
            Orientation::Vertical => Site::new(self.a.x, self.a.y + 1),
        }
    }

    #[inline]
    pub fn endpoints(self) -> (Site, Site) {
        (self.a, self.b())
    }

    /// Larger Chebyshev norm of the two endpoints.
    #[inline]
    pub fn max_norm(self) -> u32 {
        self.a.chebyshev().max(self.b().chebyshev())
    }

    /// Packed 63-bit identity. The packing preserves the canonical edge
    /// ordering, so comparing keys is the same as comparing edges.
    #[inline]
    pub fn key(self) -> u64 {
        let x = (self.a.x as i64 + PACK_OFFSET) as u64;
        let y = (self.a.y as i64 + PACK_OFFSET) as u64;
        let o = match self.orientation {
            Orientation::Vertical => 0,
            Orientation::Horizontal => 1,
        };
        (x << 32) | (y << 1) | o
    }

    #[inline]
    pub fn from_key(key: u64) -> Self {
        let x = ((key >> 32) as i64 - PACK_OFFSET) as i32;
        let y = (((key >> 1) & 0x7fff_ffff) as i64 - PACK_OFFSET) as i32;
        let orientation = if key & 1 == 1 { Orientation::Horizontal } else { Orientation::Vertical };
        Edge { a: Site::new(x, y), orientation }
    }

    /// True if both endpoints lie in the packable coordinate range.
    pub fn is_packable(self) -> bool {
        let lim = PACK_OFFSET as i32 - 2;
        self.a.x.abs() < lim && self.a.y.abs() < lim
    }

    /// The dual edge `<e_x + (1/2,1/2), e_y - (1/2,1/2)>`.
    pub fn dual(self) -> DualEdge {
        let (ex, ey) = self.endpoints();
        let p = DualPoint::from_doubled(2 * ex.x + 1, 2 * ex.y + 1);
        let q = DualPoint::from_doubled(2 * ey.x - 1, 2 * ey.y - 1);
        DualEdge::new(p, q)
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.a, self.orientation).cmp(&(other.a, other.orientation))
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Text form used in every output file: `H x y` or `V x y` with `(x, y)`
/// the left or bottom endpoint.
impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.orientation {
            Orientation::Horizontal => 'H',
            Orientation::Vertical => 'V',
        };
        write!(f, "{} {} {}", tag, self.a.x, self.a.y)
    }
}

impl FromStr for Edge {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LatticeError::BadEncoding(s.to_string());
        let mut parts = s.split(' ');
        let tag = parts.next().ok_or_else(bad)?;
        let x: i32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let y: i32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        match tag {
            "H" => Ok(Edge::horizontal(x, y)),
            "V" => Ok(Edge::vertical(x, y)),
            _ => Err(bad()),
        }
    }
}

/// The four edges touching `s`, in the order east, north, west, south.
#[inline]
pub fn incident_edges(s: Site) -> [Edge; 4] {
    [
        Edge::horizontal(s.x, s.y),
        Edge::vertical(s.x, s.y),
        Edge::horizontal(s.x - 1, s.y),
        Edge::vertical(s.x, s.y - 1),
    ]
}

/// Dyadic annulus index of an edge: the unique `k >= 1` with
/// `2^(k-1) < max_norm(e) <= 2^k`, where edges of max norm 1 get `k = 1`.
/// Every edge is assigned to the annulus of its farther endpoint, so the
/// indices partition the edge set.
#[inline]
pub fn annulus_index(e: Edge) -> u32 {
    let n = e.max_norm();
    debug_assert!(n >= 1);
    if n <= 2 {
        1
    } else {
        32 - (n - 1).leading_zeros()
    }
}

/// A point of the dual lattice stored as doubled coordinates `(2x, 2y)`;
/// both doubled coordinates are odd.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualPoint {
    pub x2: i32,
    pub y2: i32,
}

impl DualPoint {
    pub fn from_doubled(x2: i32, y2: i32) -> Self {
        debug_assert!(x2 & 1 == 1 && y2 & 1 == 1, "dual point off the dual lattice");
        DualPoint { x2, y2 }
    }

    /// `s + (1/2, 1/2)`.
    pub fn shifted(s: Site) -> Self {
        DualPoint { x2: 2 * s.x + 1, y2: 2 * s.y + 1 }
    }

    pub fn coords(self) -> (f64, f64) {
        (self.x2 as f64 / 2.0, self.y2 as f64 / 2.0)
    }
}

/// An edge of the dual lattice, endpoints in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualEdge {
    pub a: DualPoint,
    pub b: DualPoint,
}

impl DualEdge {
    pub fn new(p: DualPoint, q: DualPoint) -> Self {
        debug_assert_eq!((p.x2 - q.x2).abs() + (p.y2 - q.y2).abs(), 2);
        if p <= q {
            DualEdge { a: p, b: q }
        } else {
            DualEdge { a: q, b: p }
        }
    }

    pub fn is_horizontal(self) -> bool {
        self.a.y2 == self.b.y2
    }

    /// The primal edge this dual edge bisects. Applying the dual-edge
    /// formula on the dual lattice lands here as well.
    pub fn primal(self) -> Edge {
        if self.is_horizontal() {
            // Crosses the vertical primal edge at x = (a.x + b.x) / 2.
            let x = (self.a.x2 + 1) / 2;
            let y = (self.a.y2 - 1) / 2;
            Edge::vertical(x, y)
        } else {
            let x = (self.a.x2 - 1) / 2;
            let y = (self.a.y2 + 1) / 2;
            Edge::horizontal(x, y)
        }
    }

    /// `<f_x + (1/2,1/2), f_y - (1/2,1/2)>` for the dual edge `f` with
    /// endpoints `f_x` (left or bottom) and `f_y`.
    pub fn dual(self) -> Edge {
        let p = Site::new((self.a.x2 + 1) / 2, (self.a.y2 + 1) / 2);
        let q = Site::new((self.b.x2 - 1) / 2, (self.b.y2 - 1) / 2);
        Edge::between(p, q).expect("dual of a dual edge is a primal edge")
    }
}

/// A box `B(center, n)` or annulus `Ann(center; m, n) = B(n) \ B(m)` in the
/// Chebyshev norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Box { center: Site, radius: u32 },
    Annulus { center: Site, inner: u32, outer: u32 },
}

impl Region {
    pub fn ball(radius: u32) -> Self {
        Region::Box { center: Site::ORIGIN, radius }
    }

    pub fn annulus(inner: u32, outer: u32) -> Self {
        debug_assert!(inner < outer);
        Region::Annulus { center: Site::ORIGIN, inner, outer }
    }

    pub fn contains(&self, s: Site) -> bool {
        match *self {
            Region::Box { center, radius } => {
                Site::new(s.x - center.x, s.y - center.y).chebyshev() <= radius
            }
            Region::Annulus { center, inner, outer } => {
                let d = Site::new(s.x - center.x, s.y - center.y).chebyshev();
                d > inner && d <= outer
            }
        }
    }

    /// An edge is in a region iff both endpoints are.
    pub fn contains_edge(&self, e: Edge) -> bool {
        self.contains(e.a) && self.contains(e.b())
    }
}

pub fn edge_in_region(e: Edge, r: &Region) -> bool {
    r.contains_edge(e)
}

/// Every edge with both endpoints in `B(n)`, in canonical order.
pub fn edges_in_box(n: u32) -> impl Iterator<Item = Edge> {
    let n = n as i32;
    (-n..=n).flat_map(move |x| {
        (-n..=n).flat_map(move |y| {
            let mut v = [None, None];
            if y < n {
                v[0] = Some(Edge::vertical(x, y));
            }
            if x < n {
                v[1] = Some(Edge::horizontal(x, y));
            }
            v.into_iter().flatten()
        })
    })
}
