use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use ipc_core::bernoulli::p_n_log_ratio_fit;
use ipc_core::ensemble::{config_hash, verify, EnsembleDataset, RenewalDataset, VerdictReport, VerifyInputs};

use crate::correlation::{p_table, read_pn_csv};
use crate::{CliError, Common, KvConfig, Outcome};

#[derive(Debug, Args, Clone, Default)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ensemble dataset (JSONL).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Renewal dataset (JSONL).
    #[arg(long)]
    pub renewal: Option<PathBuf>,
    /// p_n table written by `ipclab correlation`.
    #[arg(long)]
    pub pn_table: Option<PathBuf>,
    /// Bound on the normalised maximal-inequality product.
    #[arg(long)]
    pub maximal_bound: Option<f64>,
    /// Seed of jitter and bootstrap draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const KEYS: &[&str] = &["dataset", "renewal", "pn_table", "maximal_bound", "seed", "out"];

impl VerifyArgs {
    pub fn to_kv(&self) -> Result<KvConfig, CliError> {
        let mut kv = self.common.base()?;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        kv.set_opt("dataset", path(&self.dataset));
        kv.set_opt("renewal", path(&self.renewal));
        kv.set_opt("pn_table", path(&self.pn_table));
        kv.set_opt("maximal_bound", self.maximal_bound);
        kv.set_opt("seed", self.seed);
        kv.set_opt("out", path(&self.out));
        Ok(kv)
    }
}

/// Builds the report for a parsed config. Inputs are identified in the
/// report hash by content, not by path.
pub fn report(kv: &KvConfig) -> Result<VerdictReport, CliError> {
    kv.only(KEYS)?;
    let ds_path: PathBuf = kv.require("dataset")?;
    let ds = EnsembleDataset::load(&ds_path).map_err(|e| CliError::Run(format!("{}: {e}", ds_path.display())))?;
    ds.check().map_err(CliError::run)?;
    let seed = kv.get_or("seed", 0u64)?;
    let mut canonical = KvConfig::new();
    canonical.set("dataset_hash", &ds.header.config_hash);
    canonical.set("dataset_replicas", ds.len());
    canonical.set("seed", seed);
    let renewal = match kv.get::<PathBuf>("renewal")? {
        Some(p) => {
            let rd = RenewalDataset::load(&p).map_err(|e| CliError::Run(format!("{}: {e}", p.display())))?;
            rd.check().map_err(CliError::run)?;
            canonical.set("renewal_hash", &rd.header.config_hash);
            canonical.set("renewal_replicas", rd.records.len());
            Some(rd.summary())
        }
        None => None,
    };
    let pn = match kv.get::<PathBuf>("pn_table")? {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::Run(format!("{}: {e}", p.display())))?;
            canonical.set("pn_table_hash", config_hash(&text));
            Some(read_pn_csv(&text)?)
        }
        None => None,
    };
    let maximal_bound: Option<f64> = kv.get("maximal_bound")?;
    canonical.set_opt("maximal_bound", maximal_bound);
    let hash = canonical.hash();
    let table = pn.as_deref().map(p_table);
    let inputs = VerifyInputs {
        renewal: renewal.as_ref(),
        p_table: table.as_ref(),
        p_n: pn.as_deref().map(|e| (e, p_n_log_ratio_fit(e))),
        maximal_bound,
        seed,
    };
    verify(&ds, &inputs, &hash).map_err(CliError::run)
}

pub fn run(args: &VerifyArgs) -> Result<Outcome, CliError> {
    let kv = args.to_kv()?;
    let report = report(&kv)?;
    let out = kv.get_or("out", PathBuf::from("verdicts.json"))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::create_dir(dir)?;
    }
    let mut f = std::fs::File::create(&out)?;
    serde_json::to_writer_pretty(&mut f, &report).map_err(CliError::run)?;
    writeln!(f)?;
    for v in &report.verdicts {
        println!("{}", v.line());
    }
    Ok(if report.all_pass() { Outcome::Ok } else { Outcome::ClaimFailed })
}
