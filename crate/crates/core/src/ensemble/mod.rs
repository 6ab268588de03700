//! Replica ensembles: one full invasion per replica, reduced on the fly to
//! its outlet record, persisted as JSONL and resumable.
//!
//! Replicas are independent and run on a work pool, but records are always
//! written and folded in replica order, so output does not depend on the
//! number of threads.

mod estimate;
mod renewal;
mod verdict;

pub use estimate::*;
pub use renewal::*;
pub use verdict::*;

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invasion::{Invasion, InvasionConfig, InvasionError, StepEvent};
use crate::lattice::{annulus_index, Edge};
use crate::outlets::OutletTracker;
use crate::weightfield::{Seed, MIXER_VERSION};
use crate::P_C;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: InvasionError,
    },
    #[error("invalid ensemble config: {0}")]
    Invalid(String),
    #[error("dataset i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error("existing dataset does not match this run: {0}")]
    Mismatch(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("{excluded} of {total} replicas lack the data for n = {n}")]
    InsufficientData { n: u64, excluded: usize, total: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub master_seed: u64,
    pub replicas: u64,
    /// Largest certified dyadic scale.
    pub n_max: u32,
    /// Scales between `n_max` and the stop radius.
    pub buffer: u32,
    pub edge_cap: u64,
}

impl EnsembleConfig {
    pub fn new(master_seed: u64, replicas: u64, n_max: u32, buffer: u32) -> Self {
        EnsembleConfig { master_seed, replicas, n_max, buffer, edge_cap: u64::MAX }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.replicas < 1 {
            return Err(EnsembleError::Invalid("replicas must be >= 1".into()));
        }
        if self.n_max < 1 {
            return Err(EnsembleError::Invalid("n_max must be >= 1".into()));
        }
        if self.buffer < 4 {
            return Err(EnsembleError::Invalid(format!("buffer must be >= 4, got {}", self.buffer)));
        }
        if self.n_max + self.buffer > 28 {
            return Err(EnsembleError::Invalid(format!("stop radius 2^{} too large", self.n_max + self.buffer)));
        }
        Ok(())
    }

    pub fn stop_radius(&self) -> u32 {
        1 << (self.n_max + self.buffer)
    }

    /// Canonical `key = value` text; the config hash is taken over it.
    pub fn canonical(&self) -> String {
        format!(
            "master_seed = {}\nreplicas = {}\nn_max = {}\nbuffer = {}\nedge_cap = {}\n",
            self.master_seed, self.replicas, self.n_max, self.buffer, self.edge_cap
        )
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical())
    }

    pub fn invasion(&self) -> InvasionConfig {
        InvasionConfig::to_radius(self.stop_radius()).with_edge_cap(self.edge_cap)
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutletSummary {
    pub step: u64,
    pub edge: Edge,
    pub weight: f64,
    /// `R̂` of the ponds before this outlet.
    pub radius_before: u32,
    pub annulus_k: u32,
}

/// Everything later analysis needs from one replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: u64,
    pub stream_seed: u64,
    pub steps: u64,
    pub sites: u64,
    pub certified_scale: u32,
    /// `O_1, ..., O_{certified_scale}`.
    pub counts: Vec<u64>,
    /// All outlets of the finite trace in step order, certified or not.
    pub outlets: Vec<OutletSummary>,
}

impl ReplicaRecord {
    /// Outlets inside the certified region.
    pub fn certified_outlets(&self) -> impl Iterator<Item = &OutletSummary> + '_ {
        self.outlets.iter().filter(move |o| o.annulus_k <= self.certified_scale)
    }

    /// `O(n)` for `n <= certified_scale`.
    pub fn cumulative(&self, n: u32) -> u64 {
        self.counts[..n.min(self.certified_scale) as usize].iter().sum()
    }

    /// `Q_j`, if `j` outlets fall in the certified region.
    pub fn q_index(&self, j: u64) -> Option<u32> {
        if j == 0 {
            return Some(0);
        }
        let mut acc = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            acc += c;
            if acc >= j {
                return Some(i as u32 + 1);
            }
        }
        None
    }

    /// Number of certified outlets; outlets are ordered by scale, so these
    /// are the first ones.
    pub fn certified_len(&self) -> usize {
        self.cumulative(self.certified_scale) as usize
    }

    /// `R̂_j`, the radius of the first `j` ponds.
    pub fn pond_radius(&self, j: usize) -> Option<u32> {
        (j >= 1 && j <= self.certified_len()).then(|| self.outlets[j - 1].radius_before)
    }

    /// `τ̂_j`, the weight of the `j`-th outlet.
    pub fn outlet_weight(&self, j: usize) -> Option<f64> {
        (j >= 1 && j <= self.certified_len()).then(|| self.outlets[j - 1].weight)
    }
}

/// Runs replica `index` of `config` and reduces it to its record. Memory is
/// the invasion state plus the outlet stack.
pub fn simulate_replica(config: &EnsembleConfig, index: u64) -> Result<ReplicaRecord, EnsembleError> {
    simulate_replica_with(config, index, |_| {})
}

/// [`simulate_replica`] that also hands every step to `visit`.
pub fn simulate_replica_with<F: FnMut(&StepEvent)>(
    config: &EnsembleConfig,
    index: u64,
    mut visit: F,
) -> Result<ReplicaRecord, EnsembleError> {
    let seed = Seed::new(config.master_seed, index);
    let field = seed.field();
    let wrap = |source| EnsembleError::Replica { replica: index, source };
    let mut inv = Invasion::new(config.invasion(), &field).map_err(wrap)?;
    let mut tracker = OutletTracker::new(P_C);
    inv.run(|ev| {
        tracker.observe(ev);
        visit(ev);
    })
    .map_err(wrap)?;
    let outlets: Vec<OutletSummary> = tracker
        .into_candidates()
        .into_iter()
        .map(|c| OutletSummary {
            step: c.entry.step,
            edge: c.entry.edge,
            weight: c.entry.weight,
            radius_before: c.radius_before,
            annulus_k: annulus_index(c.entry.edge),
        })
        .collect();
    let mut counts = vec![0u64; config.n_max as usize];
    for o in &outlets {
        if o.annulus_k <= config.n_max {
            counts[o.annulus_k as usize - 1] += 1;
        }
    }
    Ok(ReplicaRecord {
        replica: index,
        stream_seed: field.stream(),
        steps: inv.steps(),
        sites: inv.sites().len() as u64,
        certified_scale: config.n_max,
        counts,
        outlets,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: String,
    pub tool_version: String,
    pub mixer: String,
    pub config_hash: String,
    pub config: EnsembleConfig,
    pub stop_radius: u32,
}

impl DatasetHeader {
    pub fn new(config: &EnsembleConfig, tool_version: &str, config_hash: &str) -> Self {
        DatasetHeader {
            kind: "ensemble".into(),
            tool_version: tool_version.into(),
            mixer: MIXER_VERSION.into(),
            config_hash: config_hash.into(),
            config: *config,
            stop_radius: config.stop_radius(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDataset {
    pub header: DatasetHeader,
    pub records: Vec<ReplicaRecord>,
}

impl EnsembleDataset {
    pub fn config(&self) -> &EnsembleConfig {
        &self.header.config
    }

    pub fn n_max(&self) -> u32 {
        self.header.config.n_max
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Validates record order, seeds and certified counts.
    pub fn check(&self) -> Result<(), EnsembleError> {
        let cfg = &self.header.config;
        let mut seeds = std::collections::HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.replica != i as u64 {
                return Err(EnsembleError::Format(format!("record {i} carries replica {}", r.replica)));
            }
            if r.stream_seed != Seed::new(cfg.master_seed, r.replica).stream() {
                return Err(EnsembleError::Format(format!("replica {i}: stream seed mismatch")));
            }
            if !seeds.insert(r.stream_seed) {
                return Err(EnsembleError::Format(format!("replica {i}: duplicate stream seed")));
            }
            if r.counts.len() != cfg.n_max as usize || r.certified_scale != cfg.n_max {
                return Err(EnsembleError::Format(format!("replica {i}: expected {} certified counts", cfg.n_max)));
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a dataset. A trailing line without its newline (an interrupted
    /// write) is ignored.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<EnsembleDataset, EnsembleError> {
        let (header, records, _) = read_complete(r)?;
        let ds = EnsembleDataset { header, records };
        ds.check()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<EnsembleDataset, EnsembleError> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }

    /// `O(n)` of every replica.
    pub fn cumulative(&self, n: u32) -> Vec<f64> {
        self.records.iter().map(|r| r.cumulative(n) as f64).collect()
    }

    /// `O_k` of every replica.
    pub fn counts(&self, k: u32) -> Vec<f64> {
        self.records.iter().map(|r| r.counts[k as usize - 1] as f64).collect()
    }
}

/// Header, complete records, and the byte length of the complete prefix.
fn read_complete<H: DeserializeOwned, T: DeserializeOwned, R: BufRead>(
    mut r: R,
) -> Result<(H, Vec<T>, u64), EnsembleError> {
    let mut line = String::new();
    let mut valid = 0u64;
    let n = r.read_line(&mut line)?;
    if n == 0 || !line.ends_with('\n') {
        return Err(EnsembleError::Format("missing header".into()));
    }
    valid += n as u64;
    let header: H =
        serde_json::from_str(line.trim_end()).map_err(|e| EnsembleError::Format(format!("header: {e}")))?;
    let mut records = Vec::new();
    loop {
        line.clear();
        let n = r.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        let rec: T = serde_json::from_str(line.trim_end())
            .map_err(|e| EnsembleError::Format(format!("record {}: {e}", records.len())))?;
        records.push(rec);
        valid += n as u64;
    }
    Ok((header, records, valid))
}

/// Options for [`run_ensemble`] and the other replica runners.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub threads: usize,
    pub resume: bool,
    pub tool_version: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 1, resume: false, tool_version: crate::TOOL_VERSION.into() }
    }
}

/// An append-only JSONL file: a header line, then one flushed line per record.
pub struct JsonlFile {
    out: BufWriter<File>,
}

impl JsonlFile {
    /// Creates `path` with `header`, or with `resume` and an existing file,
    /// keeps its complete records (after checking the header) and drops a
    /// partial trailing line.
    pub fn open<H, T>(path: &Path, header: &H, resume: bool) -> Result<(JsonlFile, Vec<T>), EnsembleError>
    where
        H: Serialize + DeserializeOwned + SameRun,
        T: DeserializeOwned,
    {
        if resume && path.exists() {
            let (old, kept, valid): (H, Vec<T>, u64) = read_complete(BufReader::new(File::open(path)?))?;
            if !old.same_run(header) {
                return Err(EnsembleError::Mismatch(format!("{} was written by a different config", path.display())));
            }
            let mut f = OpenOptions::new().write(true).open(path)?;
            f.set_len(valid)?;
            f.seek(SeekFrom::End(0))?;
            Ok((JsonlFile { out: BufWriter::new(f) }, kept))
        } else {
            let mut file = JsonlFile { out: BufWriter::new(File::create(path)?) };
            file.append(header)?;
            Ok((file, Vec::new()))
        }
    }

    pub fn append<T: Serialize>(&mut self, value: &T) -> Result<(), EnsembleError> {
        serde_json::to_writer(&mut self.out, value).map_err(io::Error::from)?;
        writeln!(self.out)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes `header` and the records of replicas `0..replicas` to `path`,
/// resuming after the last complete record when asked.
fn run_jsonl<H, T, F, P>(
    path: &Path,
    header: &H,
    replicas: u64,
    opts: &RunOptions,
    simulate: F,
    mut progress: P,
) -> Result<Vec<T>, EnsembleError>
where
    H: Serialize + DeserializeOwned + SameRun,
    T: Serialize + DeserializeOwned + Send,
    F: Fn(u64) -> Result<T, EnsembleError> + Sync,
    P: FnMut(&T),
{
    let (mut file, mut records) = JsonlFile::open::<H, T>(path, header, opts.resume)?;
    let threads = opts.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EnsembleError::Invalid(format!("thread pool: {e}")))?;
    let mut next = records.len() as u64;
    while next < replicas {
        let end = (next + threads as u64).min(replicas);
        let done: Vec<Result<T, EnsembleError>> =
            pool.install(|| (next..end).into_par_iter().map(&simulate).collect());
        for rec in done {
            let rec = rec?;
            file.append(&rec)?;
            progress(&rec);
            records.push(rec);
        }
        next = end;
    }
    Ok(records)
}

/// Header comparison for resume: everything but the tool version must agree.
pub trait SameRun {
    fn same_run(&self, other: &Self) -> bool;
}

impl SameRun for DatasetHeader {
    fn same_run(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.mixer == other.mixer
            && self.config_hash == other.config_hash
            && self.config == other.config
    }
}

/// Runs `config` into the JSONL file at `path`, one flushed line per replica.
pub fn run_ensemble(config: &EnsembleConfig, path: &Path, opts: &RunOptions) -> Result<EnsembleDataset, EnsembleError> {
    run_ensemble_with(config, path, opts, |_| {})
}

/// [`run_ensemble`] with a callback after each persisted replica.
pub fn run_ensemble_with<F: FnMut(&ReplicaRecord)>(
    config: &EnsembleConfig,
    path: &Path,
    opts: &RunOptions,
    progress: F,
) -> Result<EnsembleDataset, EnsembleError> {
    config.validate()?;
    let header = DatasetHeader::new(config, &opts.tool_version, &config.hash());
    let records = run_jsonl(path, &header, config.replicas, opts, |i| simulate_replica(config, i), progress)?;
    let ds = EnsembleDataset { header, records };
    ds.check()?;
    Ok(ds)
}

pub const COUNTS_CSV_HEADER: &str = "replica,k,O_k";

/// One row per replica and certified scale.
pub fn write_counts_csv<W: Write>(mut w: W, ds: &EnsembleDataset) -> io::Result<()> {
    writeln!(w, "{COUNTS_CSV_HEADER}")?;
    for r in &ds.records {
        for (k, c) in r.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", r.replica, k + 1, c)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invasion::invade_field;
    use crate::outlets::{decompose, extract_outlets};

    fn small() -> EnsembleConfig {
        EnsembleConfig::new(17, 6, 3, 4)
    }

    #[test]
    fn config_validation() {
        assert!(small().validate().is_ok());
        assert!(EnsembleConfig::new(1, 0, 3, 4).validate().is_err());
        assert!(EnsembleConfig::new(1, 2, 3, 3).validate().is_err());
        assert!(EnsembleConfig::new(1, 2, 0, 4).validate().is_err());
        assert_eq!(small().stop_radius(), 128);
    }

    #[test]
    fn record_matches_batch_decomposition() {
        let cfg = small();
        for i in 0..4 {
            let rec = simulate_replica(&cfg, i).unwrap();
            let field = Seed::new(cfg.master_seed, i).field();
            let trace = invade_field(&cfg.invasion(), &field).unwrap();
            let outlets = extract_outlets(&trace, P_C);
            let dec = decompose(&trace, &outlets, cfg.buffer).unwrap();
            assert_eq!(rec.steps, trace.len() as u64);
            assert_eq!(rec.outlets.len(), outlets.len());
            assert_eq!(dec.certified_scale, Some(cfg.n_max));
            for k in 1..=cfg.n_max {
                assert_eq!(rec.cumulative(k), dec.cumulative_counts(k).unwrap());
            }
            for (j, o) in rec.outlets.iter().enumerate() {
                assert_eq!(o.radius_before, dec.radii[j]);
            }
            for j in 1..=rec.certified_len() as u64 {
                assert_eq!(rec.q_index(j), dec.q_index(j).ok());
            }
        }
    }

    #[test]
    fn reruns_are_byte_identical_across_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        run_ensemble(&cfg, &a, &RunOptions::default()).unwrap();
        run_ensemble(&cfg, &b, &RunOptions { threads: 3, ..RunOptions::default() }).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let ds = EnsembleDataset::load(&a).unwrap();
        assert_eq!(ds.len(), 6);
        assert!(ds.records.iter().all(|r| r.counts.len() == 3));
    }

    #[test]
    fn resume_after_interruption_matches_full_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let full = dir.path().join("full.jsonl");
        run_ensemble(&cfg, &full, &RunOptions::default()).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        // Cut in the middle of the fourth record.
        let cut = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(3).unwrap().0 + 20;
        let part = dir.path().join("part.jsonl");
        std::fs::write(&part, &bytes[..cut]).unwrap();
        let opts = RunOptions { resume: true, ..RunOptions::default() };
        let mut resumed = Vec::new();
        run_ensemble_with(&cfg, &part, &opts, |r| resumed.push(r.replica)).unwrap();
        assert_eq!(resumed, vec![3, 4, 5]);
        assert_eq!(std::fs::read(&part).unwrap(), bytes);
    }

    #[test]
    fn resume_rejects_other_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        run_ensemble(&small(), &path, &RunOptions::default()).unwrap();
        let other = EnsembleConfig { master_seed: 18, ..small() };
        let opts = RunOptions { resume: true, ..RunOptions::default() };
        assert!(matches!(run_ensemble(&other, &path, &opts), Err(EnsembleError::Mismatch(_))));
    }

    #[test]
    fn edge_cap_breach_names_the_replica() {
        let cfg = EnsembleConfig { edge_cap: 50, ..small() };
        match simulate_replica(&cfg, 2) {
            Err(EnsembleError::Replica { replica: 2, source: InvasionError::ResourceLimit { cap: 50 } }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn counts_csv_has_row_per_replica_and_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = run_ensemble(&small(), &path, &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_counts_csv(&mut buf, &ds).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6 * 3);
    }
}
