use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use ipc_core::invasion::{InvasionConfig, DEFAULT_EDGE_CAP};
use ipc_core::weightfield::Seed;
use ipc_core::{invade_field, TraceMeta, TOOL_VERSION};

use crate::{CliError, Common, KvConfig, Outcome};

#[derive(Debug, Args, Clone, Default)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replica index within the master seed's stream family.
    #[arg(long)]
    pub replica: Option<u64>,
    /// Stop once an invaded site reaches this Chebyshev radius.
    #[arg(long)]
    pub stop_radius: Option<u32>,
    /// Stop after this many invaded edges.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Truncated process, as `k=5,l=2,m=4`.
    #[arg(long)]
    pub truncated: Option<String>,
    #[arg(long)]
    pub edge_cap: Option<u64>,
    /// Output trace file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const KEYS: &[&str] = &["seed", "replica", "stop_radius", "steps", "truncated_k", "truncated_l", "truncated_m", "edge_cap", "out"];

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateConfig {
    pub seed: u64,
    pub replica: u64,
    pub invasion: InvasionConfig,
    /// `(k, l, m)` of a truncated run.
    pub truncated: Option<(u32, u32, u32)>,
    pub out: PathBuf,
}

fn parse_truncated(s: &str) -> Result<(u32, u32, u32), CliError> {
    let mut k = None;
    let mut l = None;
    let mut m = None;
    for part in s.split(',') {
        let (key, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--truncated expects k=..,l=..,m=.., got {s:?}")))?;
        let v: u32 = v.trim().parse().map_err(|e| CliError::Usage(format!("--truncated {s:?}: {e}")))?;
        match key.trim() {
            "k" => k = Some(v),
            "l" => l = Some(v),
            "m" => m = Some(v),
            other => return Err(CliError::Usage(format!("--truncated: unknown key {other:?}"))),
        }
    }
    match (k, l, m) {
        (Some(k), Some(l), Some(m)) => Ok((k, l, m)),
        _ => Err(CliError::Usage(format!("--truncated needs all of k, l, m, got {s:?}"))),
    }
}

impl SimulateArgs {
    pub fn to_kv(&self) -> Result<KvConfig, CliError> {
        let mut kv = self.common.base()?;
        kv.set_opt("seed", self.seed);
        kv.set_opt("replica", self.replica);
        kv.set_opt("stop_radius", self.stop_radius);
        kv.set_opt("steps", self.steps);
        if let Some(t) = &self.truncated {
            let (k, l, m) = parse_truncated(t)?;
            kv.set("truncated_k", k);
            kv.set("truncated_l", l);
            kv.set("truncated_m", m);
        }
        kv.set_opt("edge_cap", self.edge_cap);
        kv.set_opt("out", self.out.as_ref().map(|p| p.display().to_string()));
        Ok(kv)
    }
}

impl SimulateConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self, CliError> {
        kv.only(KEYS)?;
        let seed = kv.require("seed")?;
        let replica = kv.get_or("replica", 0)?;
        let edge_cap = kv.get_or("edge_cap", DEFAULT_EDGE_CAP)?;
        let t = (kv.get::<u32>("truncated_k")?, kv.get::<u32>("truncated_l")?, kv.get::<u32>("truncated_m")?);
        let truncated = match t {
            (Some(k), Some(l), Some(m)) => Some((k, l, m)),
            (None, None, None) => None,
            _ => return Err(CliError::Usage("truncated_k, truncated_l and truncated_m go together".into())),
        };
        let radius: Option<u32> = kv.get("stop_radius")?;
        let steps: Option<u64> = kv.get("steps")?;
        let invasion = match (radius, steps, truncated) {
            (Some(r), None, None) => InvasionConfig::to_radius(r),
            (None, Some(n), None) => InvasionConfig::steps(n),
            (None, None, Some((k, l, m))) => InvasionConfig::truncated(k, l, m).map_err(|e| CliError::Usage(e.to_string()))?,
            _ => return Err(CliError::Usage("give exactly one of --stop-radius, --steps, --truncated".into())),
        }
        .with_edge_cap(edge_cap);
        invasion.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let out = kv.get_or("out", PathBuf::from("trace.jsonl"))?;
        Ok(SimulateConfig { seed, replica, invasion, truncated, out })
    }

    /// Run-defining settings; the output path is left out.
    pub fn canonical(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("seed", self.seed);
        kv.set("replica", self.replica);
        kv.set("edge_cap", self.invasion.edge_cap);
        match (self.truncated, self.invasion.stop) {
            (Some((k, l, m)), _) => {
                kv.set("truncated_k", k);
                kv.set("truncated_l", l);
                kv.set("truncated_m", m);
            }
            (None, ipc_core::StopRule::Radius(r)) => kv.set("stop_radius", r),
            (None, ipc_core::StopRule::Steps(n)) => kv.set("steps", n),
        }
        kv
    }
}

pub fn run(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let cfg = SimulateConfig::from_kv(&args.to_kv()?)?;
    let field = Seed::new(cfg.seed, cfg.replica).field();
    let trace = invade_field(&cfg.invasion, &field).map_err(CliError::run)?;
    let meta = TraceMeta {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.canonical().hash(),
        master_seed: Some(cfg.seed),
        seed_ledger: None,
    };
    if let Some(dir) = cfg.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::create_dir(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(&cfg.out)?);
    trace.write_jsonl(&mut w, &meta)?;
    w.flush()?;
    eprintln!(
        "ipclab simulate: {} steps, stop {:?}, wrote {}",
        trace.len(),
        trace.stop_reason,
        cfg.out.display()
    );
    Ok(Outcome::Ok)
}
