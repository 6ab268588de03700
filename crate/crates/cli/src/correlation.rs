use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use ipc_core::bernoulli::{
    correlation_length, p_n_from_sample, write_pn_csv, write_sigma_csv, CorrelationLength, CrossingSample, PnEstimate,
    SigmaRow, DEFAULT_EPSILON, PN_CSV_HEADER,
};
use ipc_core::ensemble::PTable;

use crate::{read_csv_rows, write_csv, CliError, Common, KvConfig, OutputHeader, Outcome};

pub const PN_FILE: &str = "pn.csv";
pub const SIGMA_FILE: &str = "sigma.csv";
pub const LENGTH_FILE: &str = "correlation_length.csv";
pub const LENGTH_CSV_HEADER: &str = "p,epsilon,replicas,L_hat,confident";

#[derive(Debug, Args, Clone, Default)]
pub struct CorrelationArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Square sizes, comma separated.
    #[arg(long)]
    pub ns: Option<String>,
    /// Probabilities for the sigma and correlation-length tables.
    #[arg(long)]
    pub p_grid: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

const KEYS: &[&str] = &["seed", "replicas", "epsilon", "ns", "p_grid", "tolerance", "l_n_max", "out_dir"];

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationConfig {
    pub seed: u64,
    pub replicas: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub ns: Vec<u32>,
    pub p_grid: Vec<f64>,
    /// Largest square probed for `L̂(p, ε)`.
    pub l_n_max: u32,
    pub out_dir: PathBuf,
}

impl CorrelationArgs {
    pub fn to_kv(&self) -> Result<KvConfig, CliError> {
        let mut kv = self.common.base()?;
        kv.set_opt("seed", self.seed);
        kv.set_opt("replicas", self.replicas);
        kv.set_opt("epsilon", self.epsilon);
        kv.set_opt("ns", self.ns.as_deref());
        kv.set_opt("p_grid", self.p_grid.as_deref());
        kv.set_opt("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        Ok(kv)
    }
}

impl CorrelationConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self, CliError> {
        kv.only(KEYS)?;
        let cfg = CorrelationConfig {
            seed: kv.require("seed")?,
            replicas: kv.get_or("replicas", 1000)?,
            epsilon: kv.get_or("epsilon", DEFAULT_EPSILON)?,
            tolerance: kv.get_or("tolerance", 1e-4)?,
            ns: kv.get_list("ns")?.unwrap_or_else(|| vec![8, 16, 32, 64, 128]),
            p_grid: kv.get_list("p_grid")?.unwrap_or_else(|| vec![0.55, 0.6, 0.7, 0.8]),
            l_n_max: kv.get_or("l_n_max", 256)?,
            out_dir: kv.get_or("out_dir", PathBuf::from("correlation"))?,
        };
        if cfg.replicas == 0 {
            return Err(CliError::Usage("replicas must be >= 1".into()));
        }
        if cfg.ns.is_empty() || cfg.ns.contains(&0) {
            return Err(CliError::Usage(format!("ns must be nonempty and positive, got {:?}", cfg.ns)));
        }
        if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
            return Err(CliError::Usage(format!("epsilon must lie in (0, 1), got {}", cfg.epsilon)));
        }
        if !cfg.p_grid.iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(CliError::Usage(format!("p_grid entries must lie in [0, 1], got {:?}", cfg.p_grid)));
        }
        Ok(cfg)
    }

    /// Run-defining settings; the output directory is left out.
    pub fn canonical(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("seed", self.seed);
        kv.set("replicas", self.replicas);
        kv.set("epsilon", self.epsilon);
        kv.set("tolerance", self.tolerance);
        kv.set_list("ns", &self.ns);
        kv.set_list("p_grid", &self.p_grid);
        kv.set("l_n_max", self.l_n_max);
        kv
    }
}

pub fn write_length_csv<W: Write>(mut w: W, rows: &[CorrelationLength]) -> std::io::Result<()> {
    writeln!(w, "{LENGTH_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.p, r.epsilon, r.replicas, r.n, r.confident)?;
    }
    Ok(())
}

/// Reads a `p̂_n` table written by the correlation command.
pub fn read_pn_csv(text: &str) -> Result<Vec<PnEstimate>, CliError> {
    read_csv_rows(text, PN_CSV_HEADER)?
        .into_iter()
        .map(|row| {
            let bad = || CliError::Usage(format!("bad p_n row {row:?}"));
            if row.len() != 5 {
                return Err(bad());
            }
            let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad());
            Ok(PnEstimate {
                n: row[0].parse().map_err(|_| bad())?,
                epsilon: f(1)?,
                p_hat: f(2)?,
                ci: (f(3)?, f(4)?),
                replicas: 0,
            })
        })
        .collect()
}

/// `p̂_{2^k}` for the dyadic sizes of a `p̂_n` table.
pub fn p_table(estimates: &[PnEstimate]) -> PTable {
    PTable {
        entries: estimates.iter().filter(|e| e.n.is_power_of_two()).map(|e| (e.n.trailing_zeros(), e.p_hat)).collect(),
    }
}

pub fn run(args: &CorrelationArgs) -> Result<Outcome, CliError> {
    let cfg = CorrelationConfig::from_kv(&args.to_kv()?)?;
    crate::create_dir(&cfg.out_dir)?;
    let header = OutputHeader::new(&cfg.canonical().hash(), cfg.seed);
    let mut sigma = Vec::new();
    let mut pn = Vec::new();
    for &n in &cfg.ns {
        let sample = CrossingSample::collect(cfg.seed, n, n, cfg.replicas);
        for &p in &cfg.p_grid {
            sigma.push(SigmaRow { n, p, epsilon: cfg.epsilon, estimate: sample.sigma(p) });
        }
        pn.push(p_n_from_sample(&sample, cfg.epsilon, cfg.tolerance).map_err(CliError::run)?);
        eprintln!("correlation: n={n} done");
    }
    let lengths = cfg
        .p_grid
        .iter()
        .map(|&p| correlation_length(cfg.seed, p, cfg.epsilon, cfg.replicas, cfg.l_n_max))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::run)?;
    write_csv(&cfg.out_dir.join(SIGMA_FILE), &header, |w| write_sigma_csv(w, &sigma))?;
    write_csv(&cfg.out_dir.join(PN_FILE), &header, |w| write_pn_csv(w, &pn))?;
    write_csv(&cfg.out_dir.join(LENGTH_FILE), &header, |w| write_length_csv(w, &lengths))?;
    Ok(Outcome::Ok)
}
