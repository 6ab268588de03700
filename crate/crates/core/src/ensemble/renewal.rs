//! Coupling between the full invasion and the truncated process `G(k,l,m)`
//! on the same weight field, seen through the annulus `Ann(2^k, 2^(k+l))`.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    config_hash, read_complete, run_jsonl, simulate_replica_with, EnsembleConfig, EnsembleError, ReplicaRecord,
    RunOptions, SameRun,
};
use crate::invasion::{Invasion, InvasionConfig, InvasionError, StepEvent};
use crate::lattice::{Edge, Region};
use crate::outlets::OutletTracker;
use crate::stats::{log_proportion_fit, Estimate, LinearFit};
use crate::weightfield::{Seed, WeightSource, MIXER_VERSION};
use crate::P_C;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewalConfig {
    pub master_seed: u64,
    pub replicas: u64,
    pub k: u32,
    pub l: u32,
    /// Gaps `m`, increasing.
    pub ms: Vec<u32>,
    /// The reference run for gap `m` stops at `2^min(k+l+m+2, reference_cap)`.
    pub reference_cap: u32,
}

impl RenewalConfig {
    pub fn new(master_seed: u64, replicas: u64, k: u32, l: u32, ms: Vec<u32>) -> Self {
        let reference_cap = k + l + ms.iter().max().copied().unwrap_or(1) + 2;
        RenewalConfig { master_seed, replicas, k, l, ms, reference_cap }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: &str| Err(EnsembleError::Invalid(m.into()));
        if self.replicas < 1 {
            return bad("replicas must be >= 1");
        }
        if self.k < 1 || self.l < 1 {
            return bad("k and l must be >= 1");
        }
        if self.ms.is_empty() || self.ms[0] < 1 || self.ms.windows(2).any(|w| w[0] >= w[1]) {
            return bad("gaps must be >= 1 and strictly increasing");
        }
        if self.reference_cap <= self.k + self.l || self.reference_cap > 28 {
            return bad("reference cap out of range");
        }
        let top = self.k + self.l + self.ms[self.ms.len() - 1];
        if top > 28 {
            return bad("truncated stop radius too large");
        }
        Ok(())
    }

    pub fn reference_exponent(&self, m: u32) -> u32 {
        (self.k + self.l + m + 2).min(self.reference_cap)
    }

    pub fn reference_radii(&self) -> Vec<u32> {
        self.ms.iter().map(|&m| 1 << self.reference_exponent(m)).collect()
    }

    pub fn annulus(&self) -> Region {
        Region::annulus(1 << self.k, 1 << (self.k + self.l))
    }

    pub fn canonical(&self) -> String {
        let ms: Vec<String> = self.ms.iter().map(|m| m.to_string()).collect();
        format!(
            "master_seed = {}\nreplicas = {}\nk = {}\nl = {}\nms = {}\nreference_cap = {}\n",
            self.master_seed,
            self.replicas,
            self.k,
            self.l,
            ms.join(","),
            self.reference_cap
        )
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical())
    }
}

/// Per-replica outcome, indexed like `RenewalConfig::ms`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewalRecord {
    pub replica: u64,
    pub stream_seed: u64,
    /// Invaded edge sets differ inside the annulus.
    pub edges_differ: Vec<bool>,
    /// Outlet sets differ inside the annulus.
    pub outlets_differ: Vec<bool>,
}

/// What a run leaves inside the observation annulus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct AnnulusView {
    edges: HashSet<Edge>,
    outlets: BTreeSet<Edge>,
}

fn outlets_in(tracker: &OutletTracker, ann: &Region) -> BTreeSet<Edge> {
    tracker.candidates().iter().map(|c| c.entry.edge).filter(|&e| ann.contains_edge(e)).collect()
}

/// Streaming observer that snapshots the annulus view each time the radius
/// first reaches one of an increasing list of radii.
pub struct AnnulusRecorder {
    ann: Region,
    radii: Vec<u32>,
    tracker: OutletTracker,
    edges: HashSet<Edge>,
    views: Vec<AnnulusView>,
}

impl AnnulusRecorder {
    fn new(ann: Region, radii: Vec<u32>) -> Self {
        AnnulusRecorder { ann, radii, tracker: OutletTracker::new(P_C), edges: HashSet::new(), views: Vec::new() }
    }

    /// Recorder for the reference runs of `config`.
    pub fn reference(config: &RenewalConfig) -> Self {
        Self::new(config.annulus(), config.reference_radii())
    }

    pub fn observe(&mut self, ev: &StepEvent) {
        self.tracker.observe(ev);
        if self.ann.contains_edge(ev.entry.edge) {
            self.edges.insert(ev.entry.edge);
        }
        let radius = ev.new_site.map_or(ev.radius_before, |s| s.chebyshev().max(ev.radius_before));
        while self.views.len() < self.radii.len() && radius >= self.radii[self.views.len()] {
            self.snapshot();
        }
    }

    fn snapshot(&mut self) {
        self.views.push(AnnulusView { edges: self.edges.clone(), outlets: outlets_in(&self.tracker, &self.ann) });
    }

    fn finish(mut self) -> Vec<AnnulusView> {
        // A seed region that already reaches a target radius yields no steps.
        while self.views.len() < self.radii.len() {
            self.snapshot();
        }
        self.views
    }
}

fn annulus_views<W: WeightSource>(
    weights: &W,
    config: InvasionConfig,
    ann: &Region,
    radii: &[u32],
) -> Result<Vec<AnnulusView>, InvasionError> {
    let mut rec = AnnulusRecorder::new(*ann, radii.to_vec());
    let mut inv = Invasion::new(config, weights)?;
    inv.run(|ev| rec.observe(ev))?;
    Ok(rec.finish())
}

/// Runs `G(k,l,m)` for every gap and compares with the reference views.
fn compare<W: WeightSource>(
    config: &RenewalConfig,
    weights: &W,
    reference: &[AnnulusView],
) -> Result<(Vec<bool>, Vec<bool>), InvasionError> {
    let ann = config.annulus();
    let mut edges = Vec::new();
    let mut outlets = Vec::new();
    for (i, &m) in config.ms.iter().enumerate() {
        let cfg = InvasionConfig::truncated(config.k, config.l, m)?.with_edge_cap(u64::MAX);
        let stop = 1 << (config.k + config.l + m);
        let g = annulus_views(weights, cfg, &ann, &[stop])?.pop().unwrap();
        edges.push(g.edges != reference[i].edges);
        outlets.push(g.outlets != reference[i].outlets);
    }
    Ok((edges, outlets))
}

/// Coupled runs on one weight field: the full invasion against `G(k,l,m)`
/// for every gap.
pub fn renewal_replica<W: WeightSource>(
    config: &RenewalConfig,
    weights: &W,
) -> Result<(Vec<bool>, Vec<bool>), InvasionError> {
    let radii = config.reference_radii();
    let stop = *radii.iter().max().unwrap();
    let reference =
        annulus_views(weights, InvasionConfig::to_radius(stop).with_edge_cap(u64::MAX), &config.annulus(), &radii)?;
    compare(config, weights, &reference)
}

/// One replica of both `ensemble` and `renewal` from a single full run;
/// the ensemble stop radius must equal the largest reference radius.
pub fn coupled_replica(
    renewal: &RenewalConfig,
    ensemble: &EnsembleConfig,
    index: u64,
) -> Result<(ReplicaRecord, RenewalRecord), EnsembleError> {
    let top = *renewal.reference_radii().iter().max().unwrap();
    if renewal.master_seed != ensemble.master_seed || top != ensemble.stop_radius() {
        return Err(EnsembleError::Invalid("renewal reference run differs from the ensemble run".into()));
    }
    let mut rec = AnnulusRecorder::reference(renewal);
    let replica = simulate_replica_with(ensemble, index, |ev| rec.observe(ev))?;
    let field = Seed::new(renewal.master_seed, index).field();
    let (edges_differ, outlets_differ) = compare(renewal, &field, &rec.finish())
        .map_err(|source| EnsembleError::Replica { replica: index, source })?;
    Ok((replica, RenewalRecord { replica: index, stream_seed: field.stream(), edges_differ, outlets_differ }))
}

fn simulate(config: &RenewalConfig, index: u64) -> Result<RenewalRecord, EnsembleError> {
    let field = Seed::new(config.master_seed, index).field();
    let (edges_differ, outlets_differ) =
        renewal_replica(config, &field).map_err(|source| EnsembleError::Replica { replica: index, source })?;
    Ok(RenewalRecord { replica: index, stream_seed: field.stream(), edges_differ, outlets_differ })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalHeader {
    pub kind: String,
    pub tool_version: String,
    pub mixer: String,
    pub config_hash: String,
    pub config: RenewalConfig,
}

impl RenewalHeader {
    pub fn new(config: &RenewalConfig, tool_version: &str) -> Self {
        RenewalHeader {
            kind: "renewal".into(),
            tool_version: tool_version.into(),
            mixer: MIXER_VERSION.into(),
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}

impl SameRun for RenewalHeader {
    fn same_run(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.mixer == other.mixer
            && self.config_hash == other.config_hash
            && self.config == other.config
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalDataset {
    pub header: RenewalHeader,
    pub records: Vec<RenewalRecord>,
}

/// Disagreement frequencies at one gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalPoint {
    pub m: u32,
    pub reference_radius: u32,
    pub edges: Estimate,
    pub outlets: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalSummary {
    pub k: u32,
    pub l: u32,
    pub points: Vec<RenewalPoint>,
    /// `ln P̂(edges differ)` against `m`, over points with `P̂ > 0`.
    pub fit: Option<LinearFit>,
    pub outlet_fit: Option<LinearFit>,
}

impl RenewalSummary {
    /// Largest rise `P̂(m') - P̂(m)` for `m < m'`, in units of the combined SE.
    pub fn worst_rise_in_se(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                let se = (a.edges.std_err.powi(2) + b.edges.std_err.powi(2)).sqrt();
                let rise = b.edges.mean - a.edges.mean;
                let z = if se > 0.0 { rise / se } else if rise > 0.0 { f64::INFINITY } else { 0.0 };
                worst = worst.max(z);
            }
        }
        worst
    }
}

impl RenewalDataset {
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, EnsembleError> {
        let (header, records, _) = read_complete::<RenewalHeader, RenewalRecord, _>(r)?;
        let ds = RenewalDataset { header, records };
        ds.check()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn check(&self) -> Result<(), EnsembleError> {
        let cfg = &self.header.config;
        for (i, r) in self.records.iter().enumerate() {
            if r.replica != i as u64 || r.stream_seed != Seed::new(cfg.master_seed, r.replica).stream() {
                return Err(EnsembleError::Format(format!("renewal record {i} out of order")));
            }
            if r.edges_differ.len() != cfg.ms.len() || r.outlets_differ.len() != cfg.ms.len() {
                return Err(EnsembleError::Format(format!("renewal record {i}: wrong gap count")));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> RenewalSummary {
        summarize(&self.header.config, &self.records)
    }
}

pub fn summarize(config: &RenewalConfig, records: &[RenewalRecord]) -> RenewalSummary {
    let n = records.len() as u64;
    let points: Vec<RenewalPoint> = config
        .ms
        .iter()
        .enumerate()
        .map(|(i, &m)| RenewalPoint {
            m,
            reference_radius: 1 << config.reference_exponent(m),
            edges: Estimate::from_count(records.iter().filter(|r| r.edges_differ[i]).count() as u64, n),
            outlets: Estimate::from_count(records.iter().filter(|r| r.outlets_differ[i]).count() as u64, n),
        })
        .collect();
    let ms: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
    let fit = log_proportion_fit(&ms, &points.iter().map(|p| p.edges).collect::<Vec<_>>());
    let outlet_fit = log_proportion_fit(&ms, &points.iter().map(|p| p.outlets).collect::<Vec<_>>());
    RenewalSummary { k: config.k, l: config.l, points, fit, outlet_fit }
}

/// Runs `config` into `path`, resumable like [`super::run_ensemble`].
pub fn run_renewal<F: FnMut(&RenewalRecord)>(
    config: &RenewalConfig,
    path: &Path,
    opts: &RunOptions,
    progress: F,
) -> Result<RenewalDataset, EnsembleError> {
    config.validate()?;
    let header = RenewalHeader::new(config, &opts.tool_version);
    let records = run_jsonl(path, &header, config.replicas, opts, |i| simulate(config, i), progress)?;
    let ds = RenewalDataset { header, records };
    ds.check()?;
    Ok(ds)
}

/// In-memory variant of [`run_renewal`].
pub fn renewal_disagreement(config: &RenewalConfig) -> Result<RenewalSummary, EnsembleError> {
    use rayon::prelude::*;
    config.validate()?;
    let records: Result<Vec<RenewalRecord>, EnsembleError> =
        (0..config.replicas).into_par_iter().map(|i| simulate(config, i)).collect();
    Ok(summarize(config, &records?))
}
