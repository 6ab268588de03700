//! Bernoulli bond percolation read off a weight field: an edge is `p`-open
//! when its weight is below `p`, so one field couples every `p` at once.
//!
//! Crossing and circuit events are computed with disjoint sets. For crossing
//! probabilities at many `p` the sweep is done once per replica: edges are
//! added in rank order until the two sides join, and the weight of the
//! joining edge is the replica's crossing threshold.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsu::Dsu;
use crate::lattice::{edges_in_box, Edge, Region, Site};
use crate::stats::{linear_fit, log_proportion_fit, LinearFit};
use crate::weightfield::{rank_to_weight, Seed, WeightSource};
use crate::P_C;

/// Default `ε_0` used for correlation lengths.
pub const DEFAULT_EPSILON: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum BernoulliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no n <= {n_max} reaches crossing probability {target} at p = {p}")]
    Exhausted { p: f64, target: f64, n_max: u32 },
    #[error("crossing probability {sigma} at the upper probe p = {upper} is below the target {target}")]
    NonBracketing { upper: f64, sigma: f64, target: f64 },
}

/// Horizontal crossing of the rectangle `[0, width] x [0, height]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSpec {
    pub width: u32,
    pub height: u32,
    pub p: f64,
}

impl CrossingSpec {
    pub fn new(width: u32, height: u32, p: f64) -> Result<Self, BernoulliError> {
        if width < 1 || height < 1 {
            return Err(BernoulliError::Invalid(format!("rectangle {width}x{height}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(BernoulliError::Invalid(format!("p = {p}")));
        }
        Ok(CrossingSpec { width, height, p })
    }

    pub fn square(n: u32, p: f64) -> Result<Self, BernoulliError> {
        Self::new(n, n, p)
    }

    /// `n + 1` columns by `n` rows of sites, the self-dual shape.
    pub fn self_dual(n: u32, p: f64) -> Result<Self, BernoulliError> {
        if n < 2 {
            return Err(BernoulliError::Invalid("self-dual rectangle needs n >= 2".into()));
        }
        Self::new(n, n - 1, p)
    }
}

/// Sites of an axis-aligned box, numbered row by row.
#[derive(Clone, Copy, Debug)]
struct Grid {
    x0: i32,
    y0: i32,
    cols: u32,
    rows: u32,
}

impl Grid {
    fn rect(width: u32, height: u32) -> Self {
        Grid { x0: 0, y0: 0, cols: width + 1, rows: height + 1 }
    }

    fn ball(r: u32) -> Self {
        Grid { x0: -(r as i32), y0: -(r as i32), cols: 2 * r + 1, rows: 2 * r + 1 }
    }

    fn len(&self) -> usize {
        (self.cols * self.rows) as usize
    }

    #[inline]
    fn index(&self, s: Site) -> usize {
        ((s.y - self.y0) as u32 * self.cols + (s.x - self.x0) as u32) as usize
    }

    fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.rows as i32).flat_map(move |j| (0..self.cols as i32).map(move |i| Site::new(self.x0 + i, self.y0 + j)))
    }
}

/// Every edge of `[0, width] x [0, height]`.
pub fn rectangle_edges(width: u32, height: u32) -> impl Iterator<Item = Edge> {
    let (w, h) = (width as i32, height as i32);
    (0..=h).flat_map(move |y| {
        (0..=w).flat_map(move |x| {
            let hor = (x < w).then(|| Edge::horizontal(x, y));
            let ver = (y < h).then(|| Edge::vertical(x, y));
            hor.into_iter().chain(ver)
        })
    })
}

/// Connectivity between two site sets with two virtual terminals.
struct Terminals {
    dsu: Dsu,
    grid: Grid,
    source: usize,
    target: usize,
}

impl Terminals {
    fn new(grid: Grid, is_source: impl Fn(Site) -> bool, is_target: impl Fn(Site) -> bool) -> Self {
        let n = grid.len();
        let mut dsu = Dsu::new(n + 2);
        for s in grid.sites() {
            if is_source(s) {
                dsu.union(grid.index(s), n);
            }
            if is_target(s) {
                dsu.union(grid.index(s), n + 1);
            }
        }
        Terminals { dsu, grid, source: n, target: n + 1 }
    }

    #[inline]
    fn add(&mut self, e: Edge) {
        let (a, b) = e.endpoints();
        self.dsu.union(self.grid.index(a), self.grid.index(b));
    }

    fn joined(&mut self) -> bool {
        self.dsu.same(self.source, self.target)
    }

    /// Adds `edges` in increasing rank and returns the rank of the edge that
    /// joins the terminals.
    fn sweep<W: WeightSource>(mut self, weights: &W, edges: impl Iterator<Item = Edge>) -> Option<u64> {
        if self.joined() {
            return Some(0);
        }
        let mut ranked: Vec<(u64, Edge)> = edges.map(|e| (weights.rank(e), e)).collect();
        ranked.sort_unstable_by_key(|&(r, e)| (r, e));
        for (r, e) in ranked {
            self.add(e);
            if self.joined() {
                return Some(r);
            }
        }
        None
    }
}

fn side_terminals(width: u32, height: u32) -> Terminals {
    let w = width as i32;
    Terminals::new(Grid::rect(width, height), |s| s.x == 0, move |s| s.x == w)
}

/// Whether the left side of the rectangle connects to its right side through
/// `p`-open edges inside it.
pub fn has_crossing<W: WeightSource>(weights: &W, spec: &CrossingSpec) -> bool {
    let mut t = side_terminals(spec.width, spec.height);
    for e in rectangle_edges(spec.width, spec.height) {
        if weights.weight(e) < spec.p {
            t.add(e);
        }
    }
    t.joined()
}

/// The replica's crossing threshold: the rectangle is `p`-crossed iff the
/// returned weight is `< p`.
pub fn crossing_threshold<W: WeightSource>(weights: &W, width: u32, height: u32) -> f64 {
    let r = side_terminals(width, height)
        .sweep(weights, rectangle_edges(width, height))
        .expect("a full rectangle is always crossed");
    rank_to_weight(r)
}

pub use crate::stats::Estimate;

fn replica_fields(master: u64, replicas: u64) -> impl ParallelIterator<Item = crate::weightfield::WeightField> {
    (0..replicas).into_par_iter().map(move |i| Seed::new(master, i).field())
}

/// `σ̂(n, m, p)` over replicas `0..replicas` of `master`.
pub fn crossing_probability(master: u64, spec: &CrossingSpec, replicas: u64) -> Result<Estimate, BernoulliError> {
    if replicas < 1 {
        return Err(BernoulliError::Invalid("replicas must be >= 1".into()));
    }
    let hits = replica_fields(master, replicas).filter(|f| has_crossing(f, spec)).count() as u64;
    Ok(Estimate::from_count(hits, replicas))
}

/// Crossing thresholds of one rectangle over many replicas; the empirical
/// distribution function gives `σ̂` at every `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSample {
    pub width: u32,
    pub height: u32,
    /// Sorted.
    pub thresholds: Vec<f64>,
}

impl CrossingSample {
    pub fn collect(master: u64, width: u32, height: u32, replicas: u64) -> Self {
        let mut thresholds: Vec<f64> =
            replica_fields(master, replicas).map(|f| crossing_threshold(&f, width, height)).collect();
        thresholds.sort_by(|a, b| a.total_cmp(b));
        CrossingSample { width, height, thresholds }
    }

    pub fn replicas(&self) -> u64 {
        self.thresholds.len() as u64
    }

    pub fn sigma(&self, p: f64) -> Estimate {
        let hits = self.thresholds.partition_point(|&t| t < p) as u64;
        Estimate::from_count(hits, self.replicas())
    }

    /// Smallest threshold `t` with `σ̂(p) >= level` for every `p > t`.
    pub fn quantile(&self, level: f64) -> f64 {
        let n = self.thresholds.len();
        let k = ((level * n as f64).ceil() as usize).clamp(1, n);
        self.thresholds[k - 1]
    }
}

/// Correlation length estimate `L̂(p, ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLength {
    pub p: f64,
    pub epsilon: f64,
    pub n: u32,
    /// False when a bracketing `σ̂` lies within 2 SE of `1 - ε`.
    pub confident: bool,
    pub replicas: u64,
}

/// Smallest `n` with `σ̂(n, n, p) >= 1 - ε`. Squares `2, 4, 8, ...` are probed
/// until one passes, then the bracket is bisected; `n = 1` is only tried when
/// `n = 2` already passes.
pub fn correlation_length(
    master: u64,
    p: f64,
    epsilon: f64,
    replicas: u64,
    n_max: u32,
) -> Result<CorrelationLength, BernoulliError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(BernoulliError::Invalid(format!("epsilon = {epsilon}")));
    }
    let target = 1.0 - epsilon;
    let mut memo: HashMap<u32, Estimate> = HashMap::new();
    let mut probe = |n: u32| -> Result<Estimate, BernoulliError> {
        if let Some(e) = memo.get(&n) {
            return Ok(*e);
        }
        let e = crossing_probability(master, &CrossingSpec::square(n, p)?, replicas)?;
        memo.insert(n, e);
        Ok(e)
    };
    let mut hi = 2u32;
    while probe(hi)?.mean < target {
        hi *= 2;
        if hi > n_max {
            return Err(BernoulliError::Exhausted { p, target, n_max });
        }
    }
    let mut lo = if hi == 2 { 1 } else { hi / 2 };
    if hi == 2 && probe(1)?.mean >= target {
        hi = 1;
        lo = 0;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid)?.mean >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let close = |e: Estimate| (e.mean - target).abs() <= 2.0 * e.std_err;
    let mut confident = !close(probe(hi)?);
    if lo >= 1 {
        confident &= !close(probe(lo)?);
    }
    Ok(CorrelationLength { p, epsilon, n: hi, confident, replicas })
}

/// `p̂_n` with its confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnEstimate {
    pub n: u32,
    pub epsilon: f64,
    pub p_hat: f64,
    pub ci: (f64, f64),
    pub replicas: u64,
}

/// Solves `σ̂(n, n, p) = 1 - ε` by bisection to `tolerance` in `p`. The
/// interval comes from the binomial spread of the empirical level.
pub fn p_n_estimate(
    master: u64,
    n: u32,
    epsilon: f64,
    replicas: u64,
    tolerance: f64,
) -> Result<PnEstimate, BernoulliError> {
    if n < 1 || replicas < 1 || !(epsilon > 0.0 && epsilon < 1.0) || !(tolerance > 0.0 && tolerance < 0.5) {
        return Err(BernoulliError::Invalid(format!("n={n} epsilon={epsilon} replicas={replicas} tolerance={tolerance}")));
    }
    let sample = CrossingSample::collect(master, n, n, replicas);
    p_n_from_sample(&sample, epsilon, tolerance)
}

pub fn p_n_from_sample(sample: &CrossingSample, epsilon: f64, tolerance: f64) -> Result<PnEstimate, BernoulliError> {
    let target = 1.0 - epsilon;
    let upper = 1.0 - tolerance;
    let top = sample.sigma(upper).mean;
    if top < target {
        return Err(BernoulliError::NonBracketing { upper, sigma: top, target });
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if sample.sigma(mid).mean >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let spread = 1.96 * (epsilon * (1.0 - epsilon) / sample.replicas() as f64).sqrt();
    let ci = (sample.quantile((target - spread).max(0.0)), sample.quantile((target + spread).min(1.0)));
    Ok(PnEstimate { n: sample.width, epsilon, p_hat: 0.5 * (lo + hi), ci, replicas: sample.replicas() })
}

/// Regression of `|log((p_m - p_c) / (p_n - p_c))|` on `|log(m / n)|` over all
/// pairs of estimates.
pub fn p_n_log_ratio_fit(estimates: &[PnEstimate]) -> Option<LinearFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            if a.p_hat <= P_C || b.p_hat <= P_C || a.n == b.n {
                continue;
            }
            x.push((a.n as f64 / b.n as f64).ln().abs());
            y.push(((a.p_hat - P_C) / (b.p_hat - P_C)).ln().abs());
        }
    }
    linear_fit(&x, &y, None)
}

/// Whether some site of `B(inner)` reaches `∂B(outer)` through `p`-open edges
/// of `B(outer)`. Panics unless `inner < outer`.
pub fn connects_to_radius<W: WeightSource>(weights: &W, p: f64, inner: u32, outer: u32) -> bool {
    assert!(inner < outer, "inner box must lie inside B(outer)");
    let mut t = Terminals::new(Grid::ball(outer), |s| s.chebyshev() <= inner, |s| s.chebyshev() == outer);
    for e in edges_in_box(outer) {
        if weights.weight(e) < p {
            t.add(e);
        }
    }
    t.joined()
}

/// Dual points are numbered inside `B(n)`; everything at norm `n + 1/2` or
/// beyond is one outer node.
struct DualGrid {
    n: i32,
    side: usize,
}

impl DualGrid {
    fn new(n: u32) -> Self {
        DualGrid { n: n as i32, side: 2 * n as usize }
    }

    fn outer(&self) -> usize {
        self.side * self.side
    }

    /// Node of the dual point `(x2 / 2, y2 / 2)`.
    fn node(&self, x2: i32, y2: i32) -> usize {
        if x2.abs() > 2 * self.n || y2.abs() > 2 * self.n {
            return self.outer();
        }
        let i = ((x2 + 2 * self.n - 1) / 2) as usize;
        let j = ((y2 + 2 * self.n - 1) / 2) as usize;
        j * self.side + i
    }
}

fn check_annulus(m: u32, n: u32) {
    assert!(m >= 1 && m < n, "annulus needs 1 <= m < n, got m={m} n={n}");
}

/// Whether a `p`-open circuit around the origin lies in `Ann(m, n)`: the face
/// at `(1/2, 1/2)` is cut off from infinity by open annulus edges.
pub fn open_circuit_in_annulus<W: WeightSource>(weights: &W, p: f64, m: u32, n: u32) -> bool {
    check_annulus(m, n);
    let ann = Region::annulus(m, n);
    let grid = DualGrid::new(n);
    let mut dsu = Dsu::new(grid.outer() + 1);
    for e in edges_in_box(n) {
        if ann.contains_edge(e) && weights.weight(e) < p {
            continue;
        }
        let d = e.dual();
        dsu.union(grid.node(d.a.x2, d.a.y2), grid.node(d.b.x2, d.b.y2));
    }
    !dsu.same(grid.node(1, 1), grid.outer())
}

/// Whether a `p`-closed dual circuit around the origin lies strictly between
/// `∂B(m + 1)` and `∂B(n)`: no open path inside `Ann(m, n)` joins them.
pub fn closed_dual_circuit_in_annulus<W: WeightSource>(weights: &W, p: f64, m: u32, n: u32) -> bool {
    check_annulus(m, n);
    !annulus_open_crossing(weights, p, m, n)
}

/// `p`-open path inside `Ann(m, n)` from `∂B(m + 1)` to `∂B(n)`.
pub fn annulus_open_crossing<W: WeightSource>(weights: &W, p: f64, m: u32, n: u32) -> bool {
    let ann = Region::annulus(m, n);
    let mut t = annulus_terminals(m, n);
    for e in edges_in_box(n) {
        if ann.contains_edge(e) && weights.weight(e) < p {
            t.add(e);
        }
    }
    t.joined()
}

fn annulus_terminals(m: u32, n: u32) -> Terminals {
    Terminals::new(Grid::ball(n), move |s| s.chebyshev() == m + 1, move |s| s.chebyshev() == n)
}

/// Smallest weight `t` such that `Ann(m, n)` is crossed for every `p > t`;
/// a closed dual circuit separates the rings iff `p <= t`.
pub fn annulus_crossing_threshold<W: WeightSource>(weights: &W, m: u32, n: u32) -> f64 {
    check_annulus(m, n);
    let ann = Region::annulus(m, n);
    let r = annulus_terminals(m, n)
        .sweep(weights, edges_in_box(n).filter(|e| ann.contains_edge(*e)))
        .expect("a full annulus is always crossed");
    rank_to_weight(r)
}

/// Decay of `P̂(closed dual circuit in Ann(n, R))` against `n / L̂(p)` for a
/// fixed outer radius `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitDecay {
    pub p: f64,
    pub correlation_length: u32,
    pub outer: u32,
    /// `(n, estimate)` per probed radius.
    pub points: Vec<(u32, Estimate)>,
    /// Fit of `log P̂` on `n / L̂`, over the radii with a positive estimate.
    pub fit: Option<LinearFit>,
}

pub fn circuit_decay(master: u64, p: f64, l_hat: u32, ns: &[u32], outer: u32, replicas: u64) -> CircuitDecay {
    let points: Vec<(u32, Estimate)> = ns
        .iter()
        .map(|&n| {
            let hits = replica_fields(master, replicas)
                .filter(|f| annulus_crossing_threshold(f, n, outer) >= p)
                .count() as u64;
            (n, Estimate::from_count(hits, replicas))
        })
        .collect();
    let x: Vec<f64> = points.iter().map(|(n, _)| *n as f64 / l_hat as f64).collect();
    let fit = log_proportion_fit(&x, &points.iter().map(|(_, e)| *e).collect::<Vec<_>>());
    CircuitDecay { p, correlation_length: l_hat, outer, points, fit }
}

pub const SIGMA_CSV_HEADER: &str = "n,p,epsilon,replicas,sigma_hat,stderr";
pub const PN_CSV_HEADER: &str = "n,epsilon,p_n_hat,ci_lo,ci_hi";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub n: u32,
    pub p: f64,
    pub epsilon: f64,
    pub estimate: Estimate,
}

pub fn write_sigma_csv<W: Write>(mut w: W, rows: &[SigmaRow]) -> io::Result<()> {
    writeln!(w, "{SIGMA_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6}",
            r.n, r.p, r.epsilon, r.estimate.replicas, r.estimate.mean, r.estimate.std_err
        )?;
    }
    Ok(())
}

pub fn write_pn_csv<W: Write>(mut w: W, rows: &[PnEstimate]) -> io::Result<()> {
    writeln!(w, "{PN_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:.6},{:.6},{:.6}", r.n, r.epsilon, r.p_hat, r.ci.0, r.ci.1)?;
    }
    Ok(())
}
