//! The invasion engine.
//!
//! Starting from a seed region, the engine repeatedly invades the
//! minimum-weight edge of the outer edge boundary `{e not invaded : some
//! endpoint of e invaded}`. Each edge enters the priority queue exactly once,
//! at the moment its first endpoint is invaded; edges that later get both
//! endpoints invaded stay on the boundary until popped, as they should.
//! Ties in weight rank (possible only through 52-bit hash collisions) are
//! broken by canonical edge order.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{incident_edges, Edge, LatticeError, Site};
use crate::occupancy::SiteSet;
use crate::quadheap::QuadHeap;
use crate::weightfield::{rank_to_weight, WeightField, WeightSource, MIXER_VERSION, RANK_ONE};

pub const DEFAULT_EDGE_CAP: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum InvasionError {
    #[error("invaded edge count exceeded the cap of {cap}")]
    ResourceLimit { cap: u64 },
    #[error("invalid invasion config: {0}")]
    InvalidConfig(String),
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace: {0}")]
    Format(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRegion {
    Origin,
    /// Every site of `B(r)` and every edge inside it invaded at step 0.
    Box(u32),
}

impl SeedRegion {
    pub fn contains(&self, s: Site) -> bool {
        match *self {
            SeedRegion::Origin => s == Site::ORIGIN,
            SeedRegion::Box(r) => s.chebyshev() <= r,
        }
    }

    pub fn radius(&self) -> u32 {
        match *self {
            SeedRegion::Origin => 0,
            SeedRegion::Box(r) => r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop once an invaded site has Chebyshev norm `R`.
    Radius(u32),
    /// Stop after `N` edges.
    Steps(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvasionConfig {
    pub seed_region: SeedRegion,
    pub stop: StopRule,
    pub edge_cap: u64,
}

impl InvasionConfig {
    pub fn to_radius(radius: u32) -> Self {
        InvasionConfig { seed_region: SeedRegion::Origin, stop: StopRule::Radius(radius), edge_cap: DEFAULT_EDGE_CAP }
    }

    pub fn steps(n: u64) -> Self {
        InvasionConfig { seed_region: SeedRegion::Origin, stop: StopRule::Steps(n), edge_cap: DEFAULT_EDGE_CAP }
    }

    pub fn with_seed_region(mut self, seed_region: SeedRegion) -> Self {
        self.seed_region = seed_region;
        self
    }

    pub fn with_edge_cap(mut self, cap: u64) -> Self {
        self.edge_cap = cap;
        self
    }

    /// Config of the truncated process `G(k, l, m)`: seed `B(2^(k-m))` (the
    /// origin when `k < m`), stop on reaching `∂B(2^(k+l+m))`.
    pub fn truncated(k: u32, l: u32, m: u32) -> Result<Self, InvasionError> {
        if m < 1 {
            return Err(InvasionError::InvalidConfig("truncated invasion needs m >= 1".into()));
        }
        if l < 1 {
            return Err(InvasionError::InvalidConfig("truncated invasion needs l >= 1".into()));
        }
        if k + l + m > 30 {
            return Err(InvasionError::InvalidConfig(format!("stop radius 2^{} too large", k + l + m)));
        }
        let seed_region = if k < m { SeedRegion::Origin } else { SeedRegion::Box(1 << (k - m)) };
        Ok(InvasionConfig { seed_region, stop: StopRule::Radius(1 << (k + l + m)), edge_cap: DEFAULT_EDGE_CAP })
    }

    pub fn validate(&self) -> Result<(), InvasionError> {
        match self.stop {
            StopRule::Radius(0) => Err(InvasionError::InvalidConfig("stop radius must be >= 1".into())),
            StopRule::Steps(0) => Err(InvasionError::InvalidConfig("step count must be >= 1".into())),
            StopRule::Radius(r) if r >= 1 << 29 => {
                Err(InvasionError::InvalidConfig(format!("stop radius {r} beyond the packable range")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RadiusHit,
    StepsExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based.
    pub step: u64,
    pub edge: Edge,
    pub weight: f64,
}

/// One invasion step as seen by a streaming consumer.
#[derive(Clone, Copy, Debug)]
pub struct StepEvent {
    pub entry: TraceEntry,
    /// The site added by this step, if the edge reached a new site.
    pub new_site: Option<Site>,
    /// Largest Chebyshev norm among sites invaded before this step.
    pub radius_before: u32,
}

/// Outer-boundary priority queue split in two levels: a 4-ary heap for
/// ranks below a moving threshold and an unordered cold list (keys only) for
/// the rest. The heap minimum is the global minimum whenever the heap is
/// non-empty; an empty heap raises the threshold and pulls in cold entries.
struct BoundaryQueue {
    hot: QuadHeap,
    cold: Vec<u64>,
    threshold: u64,
}

impl BoundaryQueue {
    fn new(threshold: f64) -> Self {
        BoundaryQueue { hot: QuadHeap::new(), cold: Vec::new(), threshold: (threshold * RANK_ONE as f64) as u64 }
    }

    #[inline(always)]
    fn push(&mut self, rank: u64, key: u64) {
        if rank < self.threshold {
            self.hot.push((rank, key));
        } else {
            self.cold.push(key);
        }
    }

    #[inline]
    fn pop<W: WeightSource>(&mut self, weights: &W) -> Option<(u64, u64)> {
        while self.hot.is_empty() {
            if self.cold.is_empty() {
                return None;
            }
            self.refill(weights);
        }
        self.hot.pop()
    }

    #[cold]
    fn refill<W: WeightSource>(&mut self, weights: &W) {
        self.threshold = if self.threshold >= RANK_ONE - RANK_ONE / 16 {
            u64::MAX
        } else {
            self.threshold + (RANK_ONE - self.threshold) / 4 + 1
        };
        let t = self.threshold;
        let hot = &mut self.hot;
        self.cold.retain(|&key| {
            let rank = weights.rank(Edge::from_key(key));
            if rank < t {
                hot.push((rank, key));
                false
            } else {
                true
            }
        });
    }

    fn len(&self) -> usize {
        self.hot.len() + self.cold.len()
    }
}

/// Initial split point of the boundary queue.
const HOT_THRESHOLD: f64 = 0.55;

/// Streaming invasion. Call [`Invasion::step`] until it returns `None`.
pub struct Invasion<'w, W: WeightSource> {
    weights: &'w W,
    config: InvasionConfig,
    sites: SiteSet,
    queue: BoundaryQueue,
    steps: u64,
    radius: u32,
    stop_reason: Option<StopReason>,
}

impl<'w, W: WeightSource> Invasion<'w, W> {
    pub fn new(config: InvasionConfig, weights: &'w W) -> Result<Self, InvasionError> {
        config.validate()?;
        let initial = match config.stop {
            StopRule::Radius(r) => r.min(1 << 10),
            StopRule::Steps(_) => 64,
        };
        let mut inv = Invasion {
            weights,
            config,
            sites: SiteSet::with_radius(initial.max(config.seed_region.radius() + 1)),
            queue: BoundaryQueue::new(HOT_THRESHOLD),
            steps: 0,
            radius: 0,
            stop_reason: None,
        };
        match config.seed_region {
            SeedRegion::Origin => inv.add_site(Site::ORIGIN),
            SeedRegion::Box(r) => {
                let r = r as i32;
                for y in -r..=r {
                    for x in -r..=r {
                        inv.sites.insert(Site::new(x, y));
                    }
                }
                // Only edges leaving the box enter the boundary.
                for y in -r..=r {
                    for x in -r..=r {
                        if x.abs() == r || y.abs() == r {
                            inv.push_boundary(Site::new(x, y));
                        }
                    }
                }
                inv.radius = r as u32;
            }
        }
        if let StopRule::Radius(stop) = config.stop {
            if inv.radius >= stop {
                inv.stop_reason = Some(StopReason::RadiusHit);
            }
        }
        Ok(inv)
    }

    #[inline]
    fn push_boundary(&mut self, s: Site) {
        for (e, t) in incident_edges(s).into_iter().zip(s.neighbours()) {
            if !self.sites.contains(t) {
                self.queue.push(self.weights.rank(e), e.key());
            }
        }
    }

    #[inline]
    fn add_site(&mut self, s: Site) {
        self.sites.insert(s);
        self.push_boundary(s);
    }

    pub fn config(&self) -> &InvasionConfig {
        &self.config
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop_reason
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    /// Current number of queued boundary edges.
    pub fn boundary_len(&self) -> usize {
        self.queue.len()
    }

    #[doc(hidden)]
    pub fn queue_split(&self) -> (usize, usize, f64) {
        (self.queue.hot.len(), self.queue.cold.len(), self.queue.threshold as f64 / RANK_ONE as f64)
    }

    /// Largest Chebyshev norm of any invaded site.
    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Invades one edge. `Ok(None)` once the stop rule has fired.
    pub fn step(&mut self) -> Result<Option<StepEvent>, InvasionError> {
        if self.stop_reason.is_some() {
            return Ok(None);
        }
        if self.steps >= self.config.edge_cap {
            return Err(InvasionError::ResourceLimit { cap: self.config.edge_cap });
        }
        let (rank, key) = self.queue.pop(self.weights).expect("outer boundary of a finite set is never empty");
        let edge = Edge::from_key(key);
        self.steps += 1;
        let radius_before = self.radius;
        let (a, b) = edge.endpoints();
        let new_site = if !self.sites.contains(a) {
            Some(a)
        } else if !self.sites.contains(b) {
            Some(b)
        } else {
            None
        };
        if let Some(s) = new_site {
            self.add_site(s);
            self.radius = self.radius.max(s.chebyshev());
        }
        match self.config.stop {
            StopRule::Radius(r) if self.radius >= r => self.stop_reason = Some(StopReason::RadiusHit),
            StopRule::Steps(n) if self.steps >= n => self.stop_reason = Some(StopReason::StepsExhausted),
            _ => {}
        }
        Ok(Some(StepEvent {
            entry: TraceEntry { step: self.steps, edge, weight: rank_to_weight(rank) },
            new_site,
            radius_before,
        }))
    }

    /// Runs to completion, handing every step to `visit`.
    pub fn run<F: FnMut(&StepEvent)>(&mut self, mut visit: F) -> Result<StopReason, InvasionError> {
        while let Some(ev) = self.step()? {
            visit(&ev);
        }
        Ok(self.stop_reason.expect("stopped"))
    }
}

/// Full record of a finished invasion.
#[derive(Clone, Debug)]
pub struct InvasionTrace {
    pub config: InvasionConfig,
    /// Stream seed of the field, when the weights came from a [`WeightField`].
    pub stream_seed: Option<u64>,
    pub entries: Vec<TraceEntry>,
    pub invaded_sites: SiteSet,
    pub stop_reason: StopReason,
}

impl InvasionTrace {
    /// Every invaded edge: the seed region's internal edges plus the trace
    /// entries.
    pub fn invaded_edges(&self) -> HashSet<Edge> {
        let mut set: HashSet<Edge> = seed_internal_edges(self.config.seed_region).collect();
        set.extend(self.entries.iter().map(|e| e.edge));
        set
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seed_region(&self) -> SeedRegion {
        self.config.seed_region
    }

    /// Running maximum of invaded-site norms before each entry.
    pub fn radii_before(&self) -> Vec<u32> {
        let mut r = self.config.seed_region.radius();
        self.entries
            .iter()
            .map(|e| {
                let before = r;
                r = r.max(e.edge.max_norm());
                before
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W, meta: &TraceMeta) -> io::Result<()> {
        let header = TraceHeader {
            kind: "trace".into(),
            tool_version: meta.tool_version.clone(),
            config_hash: meta.config_hash.clone(),
            master_seed: meta.master_seed,
            mixer: MIXER_VERSION.into(),
            stream_seed: self.stream_seed.map(|s| format!("{s:016x}")),
            seed_ledger: meta.seed_ledger.clone(),
            config: self.config,
            stop_reason: self.stop_reason,
            entries: self.entries.len() as u64,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for e in &self.entries {
            writeln!(w, "{{\"step\":{},\"edge\":\"{}\",\"weight\":{:.16e}}}", e.step, e.edge, e.weight)?;
        }
        Ok(())
    }

    /// Reads a trace dump back. Invaded sites are rebuilt from the entries.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<(TraceHeader, InvasionTrace), InvasionError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| InvasionError::Format("empty trace file".into()))??;
        let header: TraceHeader =
            serde_json::from_str(&first).map_err(|e| InvasionError::Format(format!("header: {e}")))?;
        let mut entries = Vec::with_capacity(header.entries as usize);
        for line in lines {
            let line = line?;
            let raw: RawEntry =
                serde_json::from_str(&line).map_err(|e| InvasionError::Format(format!("entry: {e}")))?;
            entries.push(TraceEntry { step: raw.step, edge: raw.edge.parse()?, weight: raw.weight });
        }
        let mut sites = SiteSet::with_radius(header.config.seed_region.radius() + 1);
        seed_sites(header.config.seed_region).for_each(|s| {
            sites.insert(s);
        });
        for e in &entries {
            sites.insert(e.edge.a);
            sites.insert(e.edge.b());
        }
        let stream_seed = match &header.stream_seed {
            Some(h) => Some(u64::from_str_radix(h, 16).map_err(|_| InvasionError::Format("stream seed".into()))?),
            None => None,
        };
        let trace = InvasionTrace {
            config: header.config,
            stream_seed,
            entries,
            invaded_sites: sites,
            stop_reason: header.stop_reason,
        };
        Ok((header, trace))
    }
}

/// Provenance written into a trace header.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: Option<u64>,
    pub seed_ledger: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub kind: String,
    pub tool_version: String,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub master_seed: Option<u64>,
    pub mixer: String,
    pub stream_seed: Option<String>,
    pub seed_ledger: Option<String>,
    pub config: InvasionConfig,
    pub stop_reason: StopReason,
    pub entries: u64,
}

#[derive(Deserialize)]
struct RawEntry {
    step: u64,
    edge: String,
    weight: f64,
}

fn seed_sites(region: SeedRegion) -> impl Iterator<Item = Site> {
    let r = region.radius() as i32;
    (-r..=r).flat_map(move |y| (-r..=r).map(move |x| Site::new(x, y)))
}

/// Edges with both endpoints in the seed region.
pub fn seed_internal_edges(region: SeedRegion) -> impl Iterator<Item = Edge> {
    let r = region.radius();
    crate::lattice::edges_in_box(r).filter(move |_| r > 0)
}

/// The outer edge boundary of an invaded subgraph, straight from the
/// definition: edges not invaded with at least one invaded endpoint.
pub fn outer_boundary(invaded_sites: &HashSet<Site>, invaded_edges: &HashSet<Edge>) -> HashSet<Edge> {
    invaded_sites
        .iter()
        .flat_map(|&s| incident_edges(s))
        .filter(|e| !invaded_edges.contains(e))
        .collect()
}

/// Runs an invasion and keeps the whole trace.
pub fn invade<W: WeightSource>(config: &InvasionConfig, weights: &W) -> Result<InvasionTrace, InvasionError> {
    let mut inv = Invasion::new(*config, weights)?;
    let mut entries = Vec::new();
    let reason = inv.run(|ev| entries.push(ev.entry))?;
    Ok(InvasionTrace { config: *config, stream_seed: None, entries, invaded_sites: inv.sites, stop_reason: reason })
}

/// [`invade`] on a weight field, recording its stream seed in the trace.
pub fn invade_field(config: &InvasionConfig, field: &WeightField) -> Result<InvasionTrace, InvasionError> {
    let mut t = invade(config, field)?;
    t.stream_seed = Some(field.stream());
    Ok(t)
}

/// The truncated process `G(k, l, m)` on `field`.
pub fn truncated_invasion(field: &WeightField, k: u32, l: u32, m: u32) -> Result<InvasionTrace, InvasionError> {
    invade_field(&InvasionConfig::truncated(k, l, m)?, field)
}
