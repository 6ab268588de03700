//! Pass/fail verdicts over ensemble statistics, with the thresholds they
//! are judged against.

use serde::{Deserialize, Serialize};

use super::estimate::*;
use super::renewal::RenewalSummary;
use super::{EnsembleDataset, EnsembleError};
use crate::bernoulli::PnEstimate;
use crate::stats::{max_min_ratio, LinearFit};

/// A checked statement and the property it tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Claim {
    pub id: &'static str,
    pub statement: &'static str,
}

pub const CLAIMS: &[Claim] = &[
    Claim { id: "outlet-mean-band", statement: "a(k) stays between two positive constants" },
    Claim { id: "variance-linear-band", statement: "b(n)^2 is comparable to n" },
    Claim { id: "clt-outlet-count", statement: "(O(n) - a(n)) / b(n) converges to N(0,1)" },
    Claim { id: "slln-outlet-count", statement: "(O(n) - a(n)) / n^r -> 0 a.s. for r > 1/2" },
    Claim { id: "renewal-decay", statement: "P(S and G(k,l,m) differ in Ann(2^k, 2^(k+l))) <= C exp(-delta m)" },
    Claim { id: "covariance-decay", statement: "sup_j |E X_j X_(j+k)| decays exponentially in k" },
    Claim { id: "outlet-moment-band", statement: "E O_k^t is bounded uniformly in k" },
    Claim { id: "partial-sum-moment-band", statement: "E|X_k + ... + X_(k+m)|^t <= D(t) m^(t/2)" },
    Claim { id: "maximal-inequality", statement: "P(max_(i<=n) |X_1 + ... + X_i| >= lambda) <= Cn/lambda^2 + C sqrt(n)/lambda" },
    Claim { id: "lower-deviation", statement: "P(O(n, n+m) <= alpha m) <= C exp(-m^alpha)" },
    Claim { id: "inverse-clt-second-moment", statement: "E((a(Q_n) - n) / sigma_n)^2 -> 1" },
    Claim { id: "fluctuation-ratio-band", statement: "E(Q_n - T_n)^2, E(log R_n - T_n)^2 and E(log((tau_n - p_c)/(p_(2^T_n) - p_c)))^2 are comparable to n" },
    Claim { id: "slln-consequences", statement: "(Q_n - T_n)/n^r, (log R_n - T_n)/n^r and log((tau_n - p_c)/(p_(2^T_n) - p_c))/n^r -> 0 a.s." },
    Claim { id: "near-critical-scale", statement: "p_n lies in (1/2, 1) and decreases to 1/2" },
];

pub fn claim(id: &str) -> Option<&'static Claim> {
    CLAIMS.iter().find(|c| c.id == id)
}

/// Judging thresholds.
pub mod thresholds {
    pub const OUTLET_MEAN_RATIO: f64 = 3.0;
    pub const VARIANCE_RATIO: f64 = 2.5;
    pub const CLT_P_VALUE: f64 = 0.01;
    pub const RENEWAL_RISE_SE: f64 = 2.0;
    pub const RENEWAL_LAST: f64 = 0.1;
    pub const MOMENT_RATIO: f64 = 4.0;
    pub const PARTIAL_SUM_RATIO: f64 = 4.0;
    pub const SECOND_MOMENT_BAND: (f64, f64) = (0.5, 2.0);
    pub const FLUCTUATION_RATIO: f64 = 3.0;
    pub const SLLN_RATE: f64 = 0.75;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim: String,
    pub statistic_name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub config_hash: String,
    /// Supporting values, human readable.
    pub detail: String,
}

impl Verdict {
    fn new(claim: &str, name: &str, statistic: f64, threshold: f64, pass: bool, detail: String) -> Self {
        debug_assert!(self::claim(claim).is_some(), "unregistered claim {claim}");
        Verdict {
            claim: claim.into(),
            statistic_name: name.into(),
            statistic,
            threshold,
            pass,
            config_hash: String::new(),
            detail,
        }
    }

    fn failed(claim: &str, name: &str, threshold: f64, why: String) -> Self {
        Self::new(claim, name, f64::NAN, threshold, false, why)
    }

    pub fn with_hash(mut self, hash: &str) -> Self {
        self.config_hash = hash.into();
        self
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} {}={:.6} threshold={} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.claim,
            self.statistic_name,
            self.statistic,
            self.threshold,
            self.detail
        )
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", v.join(", "))
}

fn fit_text(f: &Option<LinearFit>) -> String {
    match f {
        Some(f) => format!("slope {:.4} CI [{:.4}, {:.4}] over {} points", f.slope, f.slope_ci.0, f.slope_ci.1, f.n),
        None => "no fit".into(),
    }
}

/// `â(k) > 0` on `ks` with max/min ratio within bound.
pub fn outlet_mean_band(est: &Estimators, ks: &[u32]) -> Verdict {
    let a: Vec<f64> = ks.iter().map(|&k| est.a_hat(k)).collect();
    let ratio = max_min_ratio(&a);
    Verdict::new(
        "outlet-mean-band",
        "max/min a_hat",
        ratio,
        thresholds::OUTLET_MEAN_RATIO,
        a.iter().all(|&x| x > 0.0) && ratio <= thresholds::OUTLET_MEAN_RATIO,
        format!("a_hat(k) for k in {ks:?} = {}", fmt_list(&a)),
    )
}

/// `b̂(n)² / n` max/min ratio on `ns`.
pub fn variance_growth_band(est: &Estimators, ns: &[u32]) -> Verdict {
    let r: Vec<f64> = ns.iter().map(|&n| est.b2_hat(n) / n as f64).collect();
    let ratio = max_min_ratio(&r);
    Verdict::new(
        "variance-linear-band",
        "max/min b2_hat(n)/n",
        ratio,
        thresholds::VARIANCE_RATIO,
        ratio <= thresholds::VARIANCE_RATIO,
        format!("b2_hat(n)/n for n in {ns:?} = {}", fmt_list(&r)),
    )
}

pub fn clt(table: &CountTable, est: &Estimators, n: u32, seed: u64) -> Verdict {
    match clt_verdict(table, est, n, seed) {
        Ok(v) => Verdict::new(
            "clt-outlet-count",
            "KS p-value (jittered)",
            v.p_value,
            thresholds::CLT_P_VALUE,
            v.p_value > thresholds::CLT_P_VALUE,
            format!(
                "n={} replicas={} D={:.4}; unjittered D={:.4} p={:.3e}",
                n, v.replicas, v.ks, v.ks_raw, v.p_value_raw
            ),
        ),
        Err(e) => Verdict::failed("clt-outlet-count", "KS p-value (jittered)", thresholds::CLT_P_VALUE, e.to_string()),
    }
}

pub fn renewal(summary: &RenewalSummary) -> Verdict {
    let rise = summary.worst_rise_in_se();
    let last = summary.points.last().map_or(f64::NAN, |p| p.edges.mean);
    let slope_ok = summary.fit.is_some_and(|f| f.slope < 0.0 && f.ci_excludes_zero());
    let pass = rise <= thresholds::RENEWAL_RISE_SE && slope_ok && last <= thresholds::RENEWAL_LAST;
    let p: Vec<f64> = summary.points.iter().map(|p| p.edges.mean).collect();
    let q: Vec<f64> = summary.points.iter().map(|p| p.outlets.mean).collect();
    Verdict::new(
        "renewal-decay",
        "P_hat(last gap)",
        last,
        thresholds::RENEWAL_LAST,
        pass,
        format!(
            "edge disagreement {} (worst rise {:.2} SE, limit {}); {}; outlet disagreement {}",
            fmt_list(&p),
            rise,
            thresholds::RENEWAL_RISE_SE,
            fit_text(&summary.fit),
            fmt_list(&q)
        ),
    )
}

pub fn covariance(table: &CountTable, est: &Estimators, k_max: u32) -> Verdict {
    let c = covariance_decay(table, est, 1, k_max);
    let slope = c.fit.map_or(f64::NAN, |f| f.slope);
    let pass = c.fit.is_some_and(|f| f.slope < 0.0 && f.ci_excludes_zero());
    let cs: Vec<f64> = c.rows.iter().map(|r| r.c).collect();
    Verdict::new(
        "covariance-decay",
        "fitted rate",
        slope,
        0.0,
        pass,
        format!("c_hat(k), k=0..{k_max} = {}; {}; SE < c(0)/10: {}", fmt_list(&cs), fit_text(&c.fit), c.precise),
    )
}

pub fn outlet_moments(table: &CountTable, est: &Estimators, ks: &[u32], seed: u64) -> Verdict {
    match moment_bound_check(table, est, 4, &[], seed) {
        Ok(m) => {
            let v: Vec<f64> = ks.iter().map(|&k| m.moments[k as usize - 1].value).collect();
            let ratio = max_min_ratio(&v);
            Verdict::new(
                "outlet-moment-band",
                "max/min E O_k^4",
                ratio,
                thresholds::MOMENT_RATIO,
                ratio <= thresholds::MOMENT_RATIO,
                format!("E O_k^4 for k in {ks:?} = {}", fmt_list(&v)),
            )
        }
        Err(e) => Verdict::failed("outlet-moment-band", "max/min E O_k^4", thresholds::MOMENT_RATIO, e.to_string()),
    }
}

pub fn partial_sum_moments(table: &CountTable, est: &Estimators, ms: &[u32], seed: u64) -> Verdict {
    let name = "max/min E|sum X|^4 / m^2";
    match moment_bound_check(table, est, 4, ms, seed) {
        Ok(m) => {
            let v: Vec<f64> = m.partial.iter().map(|p| p.normalized).collect();
            let ratio = max_min_ratio(&v);
            let pass = m.missing.is_empty() && ratio <= thresholds::PARTIAL_SUM_RATIO;
            let missing = if m.missing.is_empty() {
                String::new()
            } else {
                format!("; gaps {:?} do not fit in {} scales", m.missing, table.scales())
            };
            Verdict::new(
                "partial-sum-moment-band",
                name,
                ratio,
                thresholds::PARTIAL_SUM_RATIO,
                pass,
                format!(
                    "normalised values for m in {:?} = {}{missing}",
                    m.partial.iter().map(|p| p.m).collect::<Vec<_>>(),
                    fmt_list(&v)
                ),
            )
        }
        Err(e) => Verdict::failed("partial-sum-moment-band", name, thresholds::PARTIAL_SUM_RATIO, e.to_string()),
    }
}

pub fn maximal(table: &CountTable, est: &Estimators, n: u32, lambdas: &[f64], bound: f64) -> Verdict {
    let m = maximal_inequality_check(table, est, n, lambdas);
    let p: Vec<f64> = m.rows.iter().map(|r| r.p_hat).collect();
    Verdict::new(
        "maximal-inequality",
        "max P_hat * min(l^2/n, l/sqrt n)",
        m.max_product,
        bound,
        m.max_product <= bound,
        format!("n={n} lambda={lambdas:?} P_hat={} C_fit={:.4}", fmt_list(&p), m.c_fit),
    )
}

pub fn lower_deviation(table: &CountTable, n: u32, m: u32, alphas: &[f64]) -> Verdict {
    match lower_deviation_check(table, n, m, alphas) {
        Ok(d) => {
            let p: Vec<f64> = d.rows.iter().map(|r| r.p_hat).collect();
            let at_zero = d.rows.first().map_or(f64::NAN, |r| r.p_hat);
            Verdict::new(
                "lower-deviation",
                "P_hat(O(n,n+m) <= alpha m) at smallest alpha",
                at_zero,
                1.0,
                at_zero < 1.0,
                format!("n={n} m={m} alpha={alphas:?} P_hat={}", fmt_list(&p)),
            )
        }
        Err(e) => Verdict::failed("lower-deviation", "P_hat", 1.0, e.to_string()),
    }
}

pub fn inverse_clt(table: &CountTable, est: &Estimators, n: u64, seed: u64) -> Verdict {
    let (lo, hi) = thresholds::SECOND_MOMENT_BAND;
    match inverse_clt_verdict(table, est, n, seed) {
        Ok(v) => Verdict::new(
            "inverse-clt-second-moment",
            "second moment",
            v.second_moment,
            hi,
            (lo..=hi).contains(&v.second_moment),
            format!(
                "n={n} T_n={} sigma_n={:.4} band [{lo}, {hi}] CI [{:.3}, {:.3}] KS p={:.3e} excluded {}/{}",
                v.t_n,
                v.sigma_n,
                v.second_moment_ci.0,
                v.second_moment_ci.1,
                v.p_value,
                v.excluded,
                v.included + v.excluded
            ),
        ),
        Err(e) => Verdict::failed("inverse-clt-second-moment", "second moment", hi, format!("n={n}: {e}")),
    }
}

pub fn fluctuation_band(ds: &EnsembleDataset, est: &Estimators, ns: &[u64], p: &PTable, seed: u64) -> Verdict {
    let name = "max/min over n (worst of the three ratios)";
    let mut rows = Vec::new();
    for &n in ns {
        match fluctuation_ratios(&ds.records, est, n, p, seed) {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Verdict::failed("fluctuation-ratio-band", name, thresholds::FLUCTUATION_RATIO, format!("n={n}: {e}"))
            }
        }
    }
    let q: Vec<f64> = rows.iter().map(|r| r.q.value).collect();
    let rad: Vec<f64> = rows.iter().map(|r| r.radius.value).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.weight.value).collect();
    let worst = [max_min_ratio(&q), max_min_ratio(&rad), max_min_ratio(&w)].into_iter().fold(0.0, f64::max);
    Verdict::new(
        "fluctuation-ratio-band",
        name,
        worst,
        thresholds::FLUCTUATION_RATIO,
        worst <= thresholds::FLUCTUATION_RATIO,
        format!("n={ns:?} Q {} R {} tau {}", fmt_list(&q), fmt_list(&rad), fmt_list(&w)),
    )
}

/// All three trajectories at rate `r` shrink between `first` and `last`.
pub fn consequences(rows: &[ConsequenceRow], first: u64, last: u64) -> Verdict {
    let name = "max |value(last)| / |value(first)|";
    let at = |n: u64| rows.iter().find(|r| r.n == n);
    match (at(first), at(last)) {
        (Some(a), Some(b)) => {
            let ratios = [b.q.abs() / a.q.abs(), b.radius.abs() / a.radius.abs(), b.weight.abs() / a.weight.abs()];
            let worst = ratios.iter().copied().map(|r| if r.is_nan() { f64::INFINITY } else { r }).fold(0.0, f64::max);
            Verdict::new(
                "slln-consequences",
                name,
                worst,
                1.0,
                worst < 1.0,
                format!("n={first}: {a:?}; n={last}: {b:?}"),
            )
        }
        _ => Verdict::failed(
            "slln-consequences",
            name,
            1.0,
            format!("trajectory covers n = 1..={} only; n = {first} and {last} are needed", rows.len()),
        ),
    }
}

/// `p̂_n` stays in `(1/2, 1)`, is nonincreasing up to CI overlap, and the
/// log-ratio regression slope is positive.
pub fn near_critical(estimates: &[PnEstimate], fit: &Option<LinearFit>) -> Verdict {
    let in_range = estimates.iter().all(|e| e.p_hat > 0.5 && e.p_hat < 1.0);
    let monotone = estimates.windows(2).all(|w| w[1].ci.0 <= w[0].ci.1);
    let slope = fit.map_or(f64::NAN, |f| f.slope);
    let pass = in_range && monotone && slope.is_finite() && slope > 0.0;
    let p: Vec<f64> = estimates.iter().map(|e| e.p_hat).collect();
    Verdict::new(
        "near-critical-scale",
        "log-ratio slope",
        slope,
        0.0,
        pass,
        format!(
            "n={:?} p_hat={} in (1/2,1): {in_range} nonincreasing: {monotone}; {}",
            estimates.iter().map(|e| e.n).collect::<Vec<_>>(),
            fmt_list(&p),
            fit_text(fit)
        ),
    )
}

/// Mean path deviation `|O(n) - Â(n)| / n^r` over replicas shrinks from
/// `first` to `last`.
pub fn slln(table: &CountTable, est: &Estimators, r: f64, first: u32, last: u32) -> Verdict {
    let n = table.replicas() as f64;
    let mut mean = vec![0.0; table.scales() as usize];
    for row in table.rows() {
        for (m, v) in mean.iter_mut().zip(slln_path(row, est, r).values) {
            *m += v / n;
        }
    }
    let (a, b) = (mean[first as usize - 1], mean[last as usize - 1]);
    Verdict::new(
        "slln-outlet-count",
        "mean value(last) / mean value(first)",
        b / a,
        1.0,
        b < a,
        format!("r={r} n={first}..={last} mean values {}", fmt_list(&mean)),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub mixer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub header: ReportHeader,
    pub verdicts: Vec<Verdict>,
}

impl VerdictReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Inputs of [`verify`] beyond the dataset.
#[derive(Clone, Debug, Default)]
pub struct VerifyInputs<'a> {
    pub renewal: Option<&'a RenewalSummary>,
    pub p_table: Option<&'a PTable>,
    pub p_n: Option<(&'a [PnEstimate], Option<LinearFit>)>,
    pub maximal_bound: Option<f64>,
    pub seed: u64,
}

/// Every dataset-level verdict with its default window choices.
pub fn verify(ds: &EnsembleDataset, inputs: &VerifyInputs, config_hash: &str) -> Result<VerdictReport, EnsembleError> {
    let table = CountTable::from_dataset(ds);
    let est = estimate_moments(&table)?;
    let n_max = ds.n_max();
    let seed = inputs.seed;
    let lo = 4.min(n_max);
    let ks: Vec<u32> = (lo..=n_max).collect();
    let mut v = vec![
        outlet_mean_band(&est, &ks),
        variance_growth_band(&est, &[6, 8, 10].map(|n: u32| n.min(n_max))),
        clt(&table, &est, n_max, seed),
        covariance(&table, &est, 5.min(n_max - 1)),
        outlet_moments(&table, &est, &ks, seed),
        partial_sum_moments(&table, &est, &[4, 8, 16], seed),
        maximal(&table, &est, n_max, &MAXIMAL_LAMBDAS, inputs.maximal_bound.unwrap_or(f64::INFINITY)),
        lower_deviation(&table, 2.min(n_max - 1), n_max - 2.min(n_max - 1), &[0.0, 0.05, 0.1, 0.2]),
        inverse_clt(&table, &est, est.big_a_hat(8.min(n_max)).round() as u64, seed),
        slln(&table, &est, thresholds::SLLN_RATE, 1, n_max),
    ];
    if let Some(s) = inputs.renewal {
        v.push(renewal(s));
    }
    if let Some(p) = inputs.p_table {
        v.push(fluctuation_band(ds, &est, &[4, 6, 8], p, seed));
        if let Some(r) = ds.records.first() {
            v.push(consequences(&slln_consequences(r, &est, thresholds::SLLN_RATE, p), 4, 12));
        }
    }
    if let Some((est_pn, fit)) = &inputs.p_n {
        v.push(near_critical(est_pn, fit));
    }
    Ok(VerdictReport {
        header: ReportHeader {
            tool_version: ds.header.tool_version.clone(),
            config_hash: config_hash.into(),
            master_seed: ds.config().master_seed,
            mixer: ds.header.mixer.clone(),
        },
        verdicts: v.into_iter().map(|x| x.with_hash(config_hash)).collect(),
    })
}

/// Default `λ` grid of the maximal inequality check.
pub const MAXIMAL_LAMBDAS: [f64; 7] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0];
