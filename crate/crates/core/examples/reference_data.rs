//! Builds the reference ensemble and renewal datasets used by the
//! acceptance suite. Replicas below the renewal count share one full run
//! between the two files; the output equals separate `ensemble` and
//! `renewal` runs of the same configs.
//!
//! Usage: reference_data <ensemble.jsonl> <renewal.jsonl>

use std::path::Path;
use std::time::Instant;

use ipc_core::ensemble::{
    coupled_replica, run_ensemble_with, DatasetHeader, EnsembleConfig, JsonlFile, RenewalConfig, RenewalHeader,
    RenewalRecord, ReplicaRecord, RunOptions,
};
use ipc_core::TOOL_VERSION;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (ens_path, ren_path) = (Path::new(&args[1]), Path::new(&args[2]));
    let ens = EnsembleConfig { edge_cap: 1_000_000_000, ..EnsembleConfig::new(2024, 1000, 10, 4) };
    let mut ren = RenewalConfig::new(2024, 500, 5, 2, (1..=6).collect());
    ren.reference_cap = 14;
    let t = Instant::now();

    let (mut ens_file, ens_done) =
        JsonlFile::open::<_, ReplicaRecord>(ens_path, &DatasetHeader::new(&ens, TOOL_VERSION, &ens.hash()), true)
            .unwrap();
    let (mut ren_file, ren_done) =
        JsonlFile::open::<_, RenewalRecord>(ren_path, &RenewalHeader::new(&ren, TOOL_VERSION), true).unwrap();
    assert!(ens_done.len() >= ren_done.len() || ens_done.len() >= ren.replicas as usize);
    for i in ren_done.len() as u64..ren.replicas {
        let (rep, r) = coupled_replica(&ren, &ens, i).unwrap();
        ren_file.append(&r).unwrap();
        if i >= ens_done.len() as u64 {
            ens_file.append(&rep).unwrap();
        }
        eprintln!("{i} steps={} outlets={} {:?} t={:.0}s", rep.steps, rep.outlets.len(), r.edges_differ, t.elapsed().as_secs_f64());
    }
    drop(ens_file);
    let opts = RunOptions { resume: true, ..RunOptions::default() };
    run_ensemble_with(&ens, ens_path, &opts, |r| {
        eprintln!("{} steps={} outlets={} t={:.0}s", r.replica, r.steps, r.outlets.len(), t.elapsed().as_secs_f64())
    })
    .unwrap();
}
