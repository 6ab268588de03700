use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use ipc_core::ensemble::{
    estimate_moments, run_ensemble_with, run_renewal, write_counts_csv, CountTable, EnsembleConfig, EnsembleDataset,
    Estimators, RenewalConfig, RenewalSummary, RunOptions,
};
use ipc_core::outlets::DEFAULT_BUFFER;

use crate::{write_csv, CliError, Common, KvConfig, OutputHeader, Outcome};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const COUNTS_FILE: &str = "counts.csv";
pub const ESTIMATORS_FILE: &str = "estimators.csv";
pub const RENEWAL_FILE: &str = "renewal.jsonl";
pub const RENEWAL_CSV_FILE: &str = "renewal.csv";

pub const ESTIMATORS_CSV_HEADER: &str = "k,a_hat,a_se,A_hat,b2_hat";
pub const RENEWAL_CSV_HEADER: &str = "m,reference_radius,replicas,p_edges,se_edges,p_outlets,se_outlets";

#[derive(Debug, Args, Clone, Default)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub n_max: Option<u32>,
    /// Certification buffer in dyadic scales.
    #[arg(long)]
    pub buffer: Option<u32>,
    #[arg(long)]
    pub edge_cap: Option<u64>,
    /// Coupled renewal replicas to run alongside; 0 skips the renewal probe.
    #[arg(long)]
    pub renewal_replicas: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Continue from the replicas already persisted in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

const KEYS: &[&str] = &[
    "seed",
    "replicas",
    "n_max",
    "buffer",
    "edge_cap",
    "out_dir",
    "threads",
    "renewal_replicas",
    "renewal_k",
    "renewal_l",
    "renewal_ms",
    "renewal_cap",
];

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleCmdConfig {
    pub ensemble: EnsembleConfig,
    pub renewal: Option<RenewalConfig>,
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl EnsembleArgs {
    pub fn to_kv(&self) -> Result<KvConfig, CliError> {
        let mut kv = self.common.base()?;
        kv.set_opt("seed", self.seed);
        kv.set_opt("replicas", self.replicas);
        kv.set_opt("n_max", self.n_max);
        kv.set_opt("buffer", self.buffer);
        kv.set_opt("edge_cap", self.edge_cap);
        kv.set_opt("renewal_replicas", self.renewal_replicas);
        kv.set_opt("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        kv.set_opt("threads", self.threads);
        Ok(kv)
    }
}

impl EnsembleCmdConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self, CliError> {
        kv.only(KEYS)?;
        let seed = kv.require("seed")?;
        let ensemble = EnsembleConfig {
            edge_cap: kv.get_or("edge_cap", u64::MAX)?,
            ..EnsembleConfig::new(seed, kv.require("replicas")?, kv.get_or("n_max", 10)?, kv.get_or("buffer", DEFAULT_BUFFER)?)
        };
        ensemble.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let renewal_replicas: u64 = kv.get_or("renewal_replicas", 0)?;
        let renewal = if renewal_replicas > 0 {
            let ms = kv.get_list("renewal_ms")?.unwrap_or_else(|| (1..=6).collect());
            let mut r = RenewalConfig::new(seed, renewal_replicas, kv.get_or("renewal_k", 5)?, kv.get_or("renewal_l", 2)?, ms);
            if let Some(cap) = kv.get("renewal_cap")? {
                r.reference_cap = cap;
            }
            r.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            Some(r)
        } else {
            None
        };
        let threads = kv.get_or("threads", 1usize)?.max(1);
        Ok(EnsembleCmdConfig { ensemble, renewal, out_dir: kv.get_or("out_dir", PathBuf::from("ensemble"))?, threads })
    }
}

pub fn write_estimators_csv<W: Write>(mut w: W, est: &Estimators) -> std::io::Result<()> {
    writeln!(w, "{ESTIMATORS_CSV_HEADER}")?;
    for k in 1..=est.scales() {
        writeln!(
            w,
            "{k},{:.6},{:.6},{:.6},{:.6}",
            est.a_hat(k),
            est.a_se[k as usize - 1],
            est.big_a_hat(k),
            est.b2_hat(k)
        )?;
    }
    Ok(())
}

pub fn write_renewal_csv<W: Write>(mut w: W, s: &RenewalSummary) -> std::io::Result<()> {
    writeln!(w, "{RENEWAL_CSV_HEADER}")?;
    for p in &s.points {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            p.m, p.reference_radius, p.edges.replicas, p.edges.mean, p.edges.std_err, p.outlets.mean, p.outlets.std_err
        )?;
    }
    Ok(())
}

/// Counts and estimator tables of a finished dataset.
pub fn write_tables(dir: &Path, ds: &EnsembleDataset) -> Result<Estimators, CliError> {
    let header = OutputHeader::new(&ds.header.config_hash, ds.config().master_seed);
    write_csv(&dir.join(COUNTS_FILE), &header, |w| write_counts_csv(w, ds))?;
    let est = estimate_moments(&CountTable::from_dataset(ds)).map_err(CliError::run)?;
    write_csv(&dir.join(ESTIMATORS_FILE), &header, |w| write_estimators_csv(w, &est))?;
    Ok(est)
}

pub fn run(args: &EnsembleArgs) -> Result<Outcome, CliError> {
    let cfg = EnsembleCmdConfig::from_kv(&args.to_kv()?)?;
    crate::create_dir(&cfg.out_dir)?;
    let dataset = cfg.out_dir.join(DATASET_FILE);
    if dataset.exists() && !args.resume {
        return Err(CliError::Usage(format!("{} exists; pass --resume or remove it", dataset.display())));
    }
    let opts = RunOptions { threads: cfg.threads, resume: args.resume, ..RunOptions::default() };
    let total = cfg.ensemble.replicas;
    let ds = run_ensemble_with(&cfg.ensemble, &dataset, &opts, |r| {
        eprintln!("ensemble replica {}/{total}: {} steps", r.replica + 1, r.steps);
    })
    .map_err(CliError::run)?;
    write_tables(&cfg.out_dir, &ds)?;
    if let Some(rc) = &cfg.renewal {
        let rd = run_renewal(rc, &cfg.out_dir.join(RENEWAL_FILE), &opts, |r| {
            eprintln!("renewal replica {}/{}", r.replica + 1, rc.replicas);
        })
        .map_err(CliError::run)?;
        let header = OutputHeader::new(&rd.header.config_hash, rc.master_seed);
        write_csv(&cfg.out_dir.join(RENEWAL_CSV_FILE), &header, |w| write_renewal_csv(w, &rd.summary()))?;
    }
    eprintln!("ipclab ensemble: {} replicas in {}", ds.len(), cfg.out_dir.display());
    Ok(Outcome::Ok)
}
