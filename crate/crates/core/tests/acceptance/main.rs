//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N PASS|FAIL` line to stderr and fails when the criterion does.
//! Tests hold a shared lock so timings are not skewed by each other.
//!
//! Criteria 4 to 9 and 11 read the reference ensemble under `tests/data`,
//! produced by `cargo run --release --example reference_data`.

mod duality;
mod oracles;

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use ipc_core::bernoulli::{
    crossing_probability, has_crossing, p_n_estimate, p_n_log_ratio_fit, CrossingSpec, PnEstimate, DEFAULT_EPSILON,
};
use ipc_core::ensemble::{
    self, estimate_moments, run_ensemble, simulate_replica, slln_consequences, CountTable, EnsembleConfig,
    EnsembleDataset, Estimators, PTable, RenewalDataset, RunOptions,
};
use ipc_core::invasion::{Invasion, InvasionConfig};
use ipc_core::outlets::extract_outlets;
use ipc_core::stats::linear_fit;
use ipc_core::weightfield::Seed;
use ipc_core::{invade_field, Edge, StopReason, TraceMeta, P_C};
use rayon::prelude::*;

use oracles::ReplayError;

// ------------------------------------------------------- pinned settings

const MASTER: u64 = 20_240_601;

const C1_REPLICAS: u64 = 100_000;
const C1_SIGMA_PS: [f64; 3] = [0.2, 0.5, 0.8];
const C1_SE: f64 = 3.0;
const C1_TRACES: u64 = 1000;
const C1_REDUCTION_SAMPLES: u64 = 20_000;
const C1_BUDGET: Duration = Duration::from_secs(60);

const C2_SIZES: [u32; 3] = [8, 16, 32];
const C2_REPLICAS: u64 = 20_000;
const C2_SE: f64 = 3.0;
const C2_BUDGET: Duration = Duration::from_secs(300);

const C3_TRACES: u64 = 100;
const C3_RADIUS: u32 = 256;
const C3_THREADS: [usize; 3] = [1, 2, 4];
const C3_BUDGET: Duration = Duration::from_secs(300);

const REFERENCE_ENSEMBLE: &str = "ensemble_s2024_n10_b4.jsonl";
const REFERENCE_RENEWAL: &str = "renewal_s2024_k5_l2.jsonl";
const C4_MIN_REPLICAS: usize = 1000;
const C4_N_MAX: u32 = 10;
const C4_BUFFER: u32 = 6;
const C4_SCALES: std::ops::RangeInclusive<u32> = 4..=10;
const C4_VARIANCE_NS: [u32; 3] = [6, 8, 10];

const C5_N: u32 = 10;
const C5_SEED: u64 = 5;

const C6_K: u32 = 5;
const C6_L: u32 = 2;
const C6_MS: std::ops::RangeInclusive<u32> = 1..=6;
const C6_REPLICAS: usize = 500;

const C7_K_MAX: u32 = 5;

const C8_PARTIAL_MS: [u32; 3] = [4, 8, 16];
const C8_LAMBDAS: [f64; 7] = ensemble::MAXIMAL_LAMBDAS;
const C8_MAXIMAL_N: u32 = 10;
/// Largest normalised maximal-inequality product on the reference seed,
/// rounded up to two significant digits.
const C8_MAXIMAL_PIN: f64 = 0.034;
const C8_SEED: u64 = 8;

const C9_MEAN_SCALE: u32 = 8;
const C9_FLUCTUATION_NS: [u64; 3] = [4, 6, 8];
const C9_SEED: u64 = 9;

const C10_NS: [u32; 5] = [8, 16, 32, 64, 128];
const C10_REPLICAS: u64 = 4000;
const C10_TOLERANCE: f64 = 1e-4;
const C10_BUDGET: Duration = Duration::from_secs(3600);

const C11_RATE: f64 = 0.75;
const C11_FIRST: u64 = 4;
const C11_LAST: u64 = 12;

const C12_RADIUS: u32 = 1 << 12;
const C12_BUDGET: Duration = Duration::from_secs(10);
const C12_EXPONENTS: std::ops::RangeInclusive<u32> = 8..=12;
const C12_SEEDS: u64 = 16;
const C12_EXPONENT_BAND: (f64, f64) = (1.5, 2.0);

// ------------------------------------------------------------- plumbing

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the criterion line outside the test harness's capture, then
/// fails the test when the criterion does.
fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("criterion {criterion:>2} {}: {title}; {detail}", if pass { "PASS" } else { "FAIL" });
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
    assert!(pass, "{line}");
}

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

struct Reference {
    ds: EnsembleDataset,
    table: CountTable,
    est: Estimators,
}

fn reference() -> Result<&'static Reference, String> {
    static REF: OnceLock<Result<Reference, String>> = OnceLock::new();
    REF.get_or_init(|| {
        let path = data_path(REFERENCE_ENSEMBLE);
        let ds = EnsembleDataset::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ds.check().map_err(|e| e.to_string())?;
        let table = CountTable::from_dataset(&ds);
        let est = estimate_moments(&table).map_err(|e| e.to_string())?;
        Ok(Reference { ds, table, est })
    })
    .as_ref()
    .map_err(Clone::clone)
}

/// `p̂_n` estimates for criterion 10, shared with criteria 9 and 11.
fn p_n_table() -> &'static (Vec<PnEstimate>, Duration) {
    static TABLE: OnceLock<(Vec<PnEstimate>, Duration)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let t = Instant::now();
        let est = C10_NS
            .par_iter()
            .map(|&n| p_n_estimate(MASTER ^ n as u64, n, DEFAULT_EPSILON, C10_REPLICAS, C10_TOLERANCE).unwrap())
            .collect();
        (est, t.elapsed())
    })
}

fn p_table() -> PTable {
    PTable {
        entries: p_n_table().0.iter().map(|e| (e.n.trailing_zeros(), e.p_hat)).collect(),
    }
}

fn fmt(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", v.join(", "))
}

fn reference_or_fail(criterion: u32, title: &str) -> Option<&'static Reference> {
    match reference() {
        Ok(r) => Some(r),
        Err(e) => {
            report(criterion, title, false, &format!("reference dataset unavailable: {e}"));
            None
        }
    }
}

// ------------------------------------------------------------- criteria

#[test]
fn criterion_01_micro_oracles() {
    let _g = serial();
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    for p in C1_SIGMA_PS {
        let exact = oracles::unit_square_crossing(p);
        let est = crossing_probability(MASTER, &CrossingSpec::square(1, p).unwrap(), C1_REPLICAS).unwrap();
        let ok = (est.mean - exact).abs() <= C1_SE * est.std_err;
        pass &= ok;
        notes.push(format!("sigma(1,1,{p}) = {:.5} +- {:.5} vs {exact:.5}", est.mean, est.std_err));
    }

    let sweep = duality::sweep();
    pass &= sweep.failure.is_none();
    notes.push(format!(
        "Ann(1,3): {} edges, {:?} quarter classes, {} tuples, {} open circuits, {} closed dual circuits{}",
        sweep.edges,
        sweep.classes,
        sweep.tuples,
        sweep.circuits,
        sweep.dual_circuits,
        sweep.failure.as_deref().map(|f| format!(", violation: {f}")).unwrap_or_default()
    ));
    let reduction = duality::reduction_check(MASTER, C1_REDUCTION_SAMPLES);
    pass &= reduction.is_ok();
    notes.push(format!("class reduction on {C1_REDUCTION_SAMPLES} random configurations: {reduction:?}"));

    let mut mismatches = 0;
    for i in 0..C1_TRACES {
        let cfg = if i % 4 == 3 {
            InvasionConfig::steps(50 + i % 400)
        } else {
            InvasionConfig::to_radius(4 + (i % 29) as u32)
        };
        let trace = invade_field(&cfg, &Seed::new(MASTER, i).field()).unwrap();
        let threshold = if i % 2 == 0 { P_C } else { 0.3 + 0.4 * (i as f64 / C1_TRACES as f64) };
        let got: Vec<(u64, Edge, f64, bool)> =
            extract_outlets(&trace, threshold).iter().map(|o| (o.step, o.edge, o.weight, o.certified)).collect();
        let want: Vec<(u64, Edge, f64, bool)> = oracles::outlets_quadratic(&trace, threshold)
            .into_iter()
            .map(|(s, e, w)| (s, e, w, trace.stop_reason == StopReason::RadiusHit))
            .collect();
        mismatches += (got != want) as u32;
    }
    pass &= mismatches == 0;
    notes.push(format!("suffix-maximum outlets vs quadratic oracle: {mismatches}/{C1_TRACES} traces differ"));

    let elapsed = start.elapsed();
    pass &= elapsed < C1_BUDGET;
    notes.push(format!("runtime {elapsed:.1?} (budget {C1_BUDGET:?})"));
    report(1, "exact micro-oracles", pass, &notes.join("; "));
}

#[test]
fn criterion_02_self_duality() {
    let _g = serial();
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    for n in [2u32, 3] {
        let spec = CrossingSpec::self_dual(n, 0.5).unwrap();
        let (crossed, total, disagree) = oracles::enumerate_rectangle(n + 1, n, |c| has_crossing(c, &spec));
        let ok = crossed * 2 == total && disagree == 0;
        pass &= ok;
        notes.push(format!(
            "{} x {} sites: {crossed}/{total} configurations cross, library disagrees on {disagree}",
            n + 1,
            n
        ));
    }

    for n in C2_SIZES {
        let est = crossing_probability(MASTER + n as u64, &CrossingSpec::self_dual(n, 0.5).unwrap(), C2_REPLICAS).unwrap();
        let ok = (est.mean - 0.5).abs() <= C2_SE * est.std_err;
        pass &= ok;
        notes.push(format!("n={n}: {:.4} +- {:.4}", est.mean, est.std_err));
    }

    let elapsed = start.elapsed();
    pass &= elapsed < C2_BUDGET;
    notes.push(format!("runtime {elapsed:.1?}"));
    report(2, "self-dual rectangle crossing at p = 1/2", pass, &notes.join("; "));
}

fn trace_bytes(i: u64) -> Vec<u8> {
    let trace = invade_field(&InvasionConfig::to_radius(C3_RADIUS), &Seed::new(MASTER, i).field()).unwrap();
    let meta = TraceMeta { tool_version: "acceptance".into(), config_hash: "0".repeat(16), master_seed: Some(MASTER), seed_ledger: None };
    let mut out = Vec::new();
    trace.write_jsonl(&mut out, &meta).unwrap();
    out
}

#[test]
fn criterion_03_determinism_and_replay() {
    let _g = serial();
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    let runs: Vec<Vec<Vec<u8>>> = C3_THREADS
        .iter()
        .map(|&t| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            pool.install(|| (0..C3_TRACES).into_par_iter().map(trace_bytes).collect())
        })
        .collect();
    let rerun: Vec<Vec<u8>> = (0..C3_TRACES).map(trace_bytes).collect();
    let identical = runs.iter().all(|r| *r == runs[0]) && rerun == runs[0];
    pass &= identical;
    notes.push(format!("{C3_TRACES} traces to radius {C3_RADIUS} byte-identical across reruns and {C3_THREADS:?} threads: {identical}"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = EnsembleConfig::new(MASTER, 8, 4, 4);
    let datasets: Vec<Vec<u8>> = [1, 3]
        .iter()
        .map(|&threads| {
            let path = dir.path().join(format!("t{threads}.jsonl"));
            run_ensemble(&cfg, &path, &RunOptions { threads, ..RunOptions::default() }).unwrap();
            std::fs::read(&path).unwrap()
        })
        .collect();
    let same_dataset = datasets[0] == datasets[1];
    pass &= same_dataset;
    notes.push(format!("ensemble dataset identical for 1 and 3 threads: {same_dataset}"));

    let mut failures: Vec<(u64, ReplayError)> = Vec::new();
    let mut steps = 0usize;
    for i in 0..C3_TRACES {
        let field = Seed::new(MASTER, i).field();
        let trace = invade_field(&InvasionConfig::to_radius(C3_RADIUS), &field).unwrap();
        steps += trace.len();
        if let Err(e) = oracles::greedy_replay(&trace, &field, C3_RADIUS) {
            failures.push((i, e));
        }
    }
    pass &= failures.is_empty();
    notes.push(format!(
        "greedy replay on {C3_TRACES} traces ({steps} steps): {} failures{}",
        failures.len(),
        failures.first().map(|(i, e)| format!(", first on trace {i} at {e}")).unwrap_or_default()
    ));

    let elapsed = start.elapsed();
    pass &= elapsed < C3_BUDGET;
    notes.push(format!("runtime {elapsed:.1?}"));
    report(3, "determinism and greedy replay", pass, &notes.join("; "));
}

#[test]
fn criterion_04_mean_and_variance_bands() {
    let _g = serial();
    let title = "outlet mean and variance bands";
    let Some(r) = reference_or_fail(4, title) else { return };
    let cfg = r.ds.config();
    let ks: Vec<u32> = C4_SCALES.collect();
    let mean = ensemble::outlet_mean_band(&r.est, &ks);
    let var = ensemble::variance_growth_band(&r.est, &C4_VARIANCE_NS);
    let setup_ok = r.ds.len() >= C4_MIN_REPLICAS && cfg.n_max == C4_N_MAX && cfg.buffer >= C4_BUFFER;
    // Scales up to n_max + buffer - C4_BUFFER carry a buffer of C4_BUFFER.
    let certified = (cfg.n_max + cfg.buffer).saturating_sub(C4_BUFFER).min(cfg.n_max);
    let ks6: Vec<u32> = ks.iter().copied().filter(|&k| k <= certified).collect();
    let ns6: Vec<u32> = C4_VARIANCE_NS.iter().copied().filter(|&n| n <= certified).collect();
    let mean6 = ensemble::outlet_mean_band(&r.est, &ks6);
    let var6 = ensemble::variance_growth_band(&r.est, &ns6);
    let detail = format!(
        "{} replicas, n_max {}, buffer {} (required >= {C4_BUFFER}); {}; {}; at buffer {C4_BUFFER} (k <= {certified}): {}; {}",
        r.ds.len(),
        cfg.n_max,
        cfg.buffer,
        mean.line(),
        var.line(),
        mean6.line(),
        var6.line()
    );
    report(4, title, setup_ok && mean.pass && var.pass, &detail);
}

#[test]
fn criterion_05_clt() {
    let _g = serial();
    let title = "CLT for O(10)";
    let Some(r) = reference_or_fail(5, title) else { return };
    let v = ensemble::clt(&r.table, &r.est, C5_N, C5_SEED);
    let mut values: Vec<(u64, usize)> = Vec::new();
    for x in r.table.cumulative(C5_N) {
        match values.iter_mut().find(|(v, _)| *v == x as u64) {
            Some(e) => e.1 += 1,
            None => values.push((x as u64, 1)),
        }
    }
    values.sort();
    let detail = format!("{}; A_hat(10) = {:.4}; O(10) value counts {values:?}", v.line(), r.est.big_a_hat(C5_N));
    report(5, title, v.pass && r.ds.len() >= C4_MIN_REPLICAS, &detail);
}

#[test]
fn criterion_06_renewal_decay() {
    let _g = serial();
    let title = "renewal disagreement decay";
    let path = data_path(REFERENCE_RENEWAL);
    let rd = match RenewalDataset::load(&path).and_then(|d| d.check().map(|_| d)) {
        Ok(d) => d,
        Err(e) => return report(6, title, false, &format!("{}: {e}", path.display())),
    };
    let cfg = &rd.header.config;
    let setup_ok = cfg.k == C6_K && cfg.l == C6_L && cfg.ms == C6_MS.collect::<Vec<_>>() && rd.records.len() >= C6_REPLICAS;
    let v = ensemble::renewal(&rd.summary());
    let radii: Vec<u32> = C6_MS.map(|m| cfg.reference_exponent(m)).collect();
    let detail = format!(
        "{} pairs, (k,l) = ({}, {}), reference radii 2^{radii:?}; {}",
        rd.records.len(),
        cfg.k,
        cfg.l,
        v.line()
    );
    report(6, title, setup_ok && v.pass, &detail);
}

#[test]
fn criterion_07_covariance_decay() {
    let _g = serial();
    let title = "covariance decay";
    let Some(r) = reference_or_fail(7, title) else { return };
    let v = ensemble::covariance(&r.table, &r.est, C7_K_MAX);
    report(7, title, v.pass, &v.line());
}

#[test]
fn criterion_08_moment_bounds() {
    let _g = serial();
    let title = "moment, partial-sum and maximal bounds";
    let Some(r) = reference_or_fail(8, title) else { return };
    let ks: Vec<u32> = C4_SCALES.collect();
    let m = ensemble::outlet_moments(&r.table, &r.est, &ks, C8_SEED);
    let p = ensemble::partial_sum_moments(&r.table, &r.est, &C8_PARTIAL_MS, C8_SEED);
    let x = ensemble::maximal(&r.table, &r.est, C8_MAXIMAL_N, &C8_LAMBDAS, C8_MAXIMAL_PIN);
    let detail = format!("{}; {}; {}", m.line(), p.line(), x.line());
    report(8, title, m.pass && p.pass && x.pass, &detail);
}

#[test]
fn criterion_09_inverse_clt_and_fluctuations() {
    let _g = serial();
    let title = "inverse CLT second moment and fluctuation ratios";
    let Some(r) = reference_or_fail(9, title) else { return };
    let n = r.est.big_a_hat(C9_MEAN_SCALE).round() as u64;
    let inv = ensemble::inverse_clt(&r.table, &r.est, n, C9_SEED);
    let fl = ensemble::fluctuation_band(&r.ds, &r.est, &C9_FLUCTUATION_NS, &p_table(), C9_SEED);
    let detail = format!("A_hat({C9_MEAN_SCALE}) = {:.4} so n = {n}; {}; {}", r.est.big_a_hat(C9_MEAN_SCALE), inv.line(), fl.line());
    report(9, title, inv.pass && fl.pass, &detail);
}

#[test]
fn criterion_10_p_n() {
    let _g = serial();
    let (est, elapsed) = p_n_table();
    let fit = p_n_log_ratio_fit(est);
    let v = ensemble::near_critical(est, &fit);
    let ci: Vec<String> = est.iter().map(|e| format!("n={} [{:.4}, {:.4}]", e.n, e.ci.0, e.ci.1)).collect();
    let in_budget = *elapsed < C10_BUDGET;
    let detail = format!("{}; CIs {}; {C10_REPLICAS} replicas per n; runtime {elapsed:.1?}", v.line(), ci.join(" "));
    report(10, "near-critical p_n", v.pass && in_budget, &detail);
}

#[test]
fn criterion_11_slln_trajectories() {
    let _g = serial();
    let title = "SLLN trajectories on the reference seed";
    let Some(r) = reference_or_fail(11, title) else { return };
    let record = &r.ds.records[0];
    let rows = slln_consequences(record, &r.est, C11_RATE, &p_table());
    let v = ensemble::consequences(&rows, C11_FIRST, C11_LAST);
    let detail = format!(
        "master seed {}, replica 0 has {} certified outlets; {}",
        r.ds.config().master_seed,
        record.certified_len(),
        v.line()
    );
    report(11, title, v.pass, &detail);
}

#[test]
fn criterion_12_performance() {
    let _g = serial();
    let field = Seed::new(MASTER, 0).field();
    let t = Instant::now();
    let trace_len = {
        let cfg = InvasionConfig::to_radius(C12_RADIUS);
        let mut inv = Invasion::new(cfg, &field).unwrap();
        inv.run(|_| {}).unwrap();
        inv.steps()
    };
    let elapsed = t.elapsed();

    let radii: Vec<u32> = C12_EXPONENTS.map(|e| 1 << e).collect();
    let counts: Vec<Vec<u64>> = (0..C12_SEEDS)
        .map(|s| {
            let f = Seed::new(MASTER + 1, s).field();
            let mut inv = Invasion::new(InvasionConfig::to_radius(*radii.last().unwrap()), &f).unwrap();
            let mut at = vec![0u64; radii.len()];
            inv.run(|ev| {
                if let Some(site) = ev.new_site {
                    for (i, &r) in radii.iter().enumerate() {
                        if at[i] == 0 && site.chebyshev() >= r {
                            at[i] = ev.entry.step;
                        }
                    }
                }
            })
            .unwrap();
            at
        })
        .collect();
    let mean: Vec<f64> =
        (0..radii.len()).map(|i| counts.iter().map(|c| c[i] as f64).sum::<f64>() / C12_SEEDS as f64).collect();
    let xs: Vec<f64> = radii.iter().map(|&r| (r as f64).ln()).collect();
    let ys: Vec<f64> = mean.iter().map(|m| m.ln()).collect();
    let slope = linear_fit(&xs, &ys, None).map_or(f64::NAN, |f| f.slope);
    let (lo, hi) = C12_EXPONENT_BAND;
    let pass = elapsed < C12_BUDGET && slope >= lo && slope <= hi;
    let detail = format!(
        "radius {C12_RADIUS}: {trace_len} steps in {elapsed:.2?} (budget {C12_BUDGET:?}); \
         mean invaded edges at R = {radii:?}: {}; fitted exponent {slope:.4} (band [{lo}, {hi}])",
        fmt(&mean)
    );
    report(12, "performance and growth exponent", pass, &detail);
}

/// Replays a few reference replicas. Not a criterion; it ties the stored
/// data to the current engine.
#[test]
fn reference_data_replays() {
    let _g = serial();
    let Ok(r) = reference() else { panic!("reference dataset unavailable: {:?}", reference().err()) };
    let cfg = *r.ds.config();
    let mut cheapest: Vec<&ensemble::ReplicaRecord> = r.ds.records.iter().collect();
    cheapest.sort_by_key(|rec| rec.steps);
    for rec in cheapest.into_iter().take(2) {
        assert_eq!(&simulate_replica(&cfg, rec.replica).unwrap(), rec, "replica {}", rec.replica);
    }
    let hash = cfg.hash();
    assert_eq!(r.ds.header.config_hash, hash);
}
