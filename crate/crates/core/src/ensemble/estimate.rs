//! Estimators and statistical checks over per-replica outlet counts.
//!
//! Everything works on a [`CountTable`] (replicas × scales), so synthetic
//! counts with known laws go through the same code as real ensembles. The
//! unknown means `a(k)` are replaced by their ensemble estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnsembleDataset, EnsembleError, ReplicaRecord};
use crate::stats::{bootstrap_ci, covariance, ks_normal, linear_fit, LinearFit, Moments};
use crate::P_C;

/// Default bootstrap resample count.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Outlet counts `O_1..O_K`, one row per replica.
#[derive(Clone, Debug, PartialEq)]
pub struct CountTable {
    rows: Vec<Vec<f64>>,
    scales: usize,
}

impl CountTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, EnsembleError> {
        let scales = rows.first().map_or(0, |r| r.len());
        if scales == 0 || rows.iter().any(|r| r.len() != scales) {
            return Err(EnsembleError::Degenerate("count rows must be nonempty and of equal length".into()));
        }
        Ok(CountTable { rows, scales })
    }

    pub fn from_dataset(ds: &EnsembleDataset) -> Self {
        let rows = ds.records.iter().map(|r| r.counts.iter().map(|&c| c as f64).collect()).collect();
        CountTable { rows, scales: ds.n_max() as usize }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn replicas(&self) -> usize {
        self.rows.len()
    }

    pub fn scales(&self) -> u32 {
        self.scales as u32
    }

    /// `O_k` of every replica.
    pub fn column(&self, k: u32) -> Vec<f64> {
        self.rows.iter().map(|r| r[k as usize - 1]).collect()
    }

    /// `O(n)` of every replica.
    pub fn cumulative(&self, n: u32) -> Vec<f64> {
        self.rows.iter().map(|r| r[..n as usize].iter().sum()).collect()
    }

    /// `O(n, n+m) = O(n+m) - O(n)` of every replica.
    pub fn window(&self, n: u32, m: u32) -> Vec<f64> {
        self.rows.iter().map(|r| r[n as usize..(n + m) as usize].iter().sum()).collect()
    }
}

/// Exact, order-independent sufficient statistics of integer counts:
/// per-scale sums of `O_k`, `O_k²`, `O(n)` and `O(n)²`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountAccumulator {
    pub replicas: u64,
    sum: Vec<u128>,
    sum_sq: Vec<u128>,
    cum_sum: Vec<u128>,
    cum_sum_sq: Vec<u128>,
}

impl CountAccumulator {
    pub fn new(scales: u32) -> Self {
        let z = vec![0; scales as usize];
        CountAccumulator { replicas: 0, sum: z.clone(), sum_sq: z.clone(), cum_sum: z.clone(), cum_sum_sq: z }
    }

    pub fn push(&mut self, counts: &[u64]) {
        assert_eq!(counts.len(), self.sum.len());
        self.replicas += 1;
        let mut cum = 0u128;
        for (k, &c) in counts.iter().enumerate() {
            let c = c as u128;
            cum += c;
            self.sum[k] += c;
            self.sum_sq[k] += c * c;
            self.cum_sum[k] += cum;
            self.cum_sum_sq[k] += cum * cum;
        }
    }

    pub fn push_record(&mut self, r: &ReplicaRecord) {
        self.push(&r.counts);
    }

    pub fn merge(&self, other: &CountAccumulator) -> CountAccumulator {
        assert_eq!(self.sum.len(), other.sum.len());
        let add = |a: &[u128], b: &[u128]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        CountAccumulator {
            replicas: self.replicas + other.replicas,
            sum: add(&self.sum, &other.sum),
            sum_sq: add(&self.sum_sq, &other.sum_sq),
            cum_sum: add(&self.cum_sum, &other.cum_sum),
            cum_sum_sq: add(&self.cum_sum_sq, &other.cum_sum_sq),
        }
    }

    /// Moment estimators; needs at least two replicas.
    pub fn estimators(&self) -> Result<Estimators, EnsembleError> {
        let n = self.replicas;
        if n < 2 {
            return Err(EnsembleError::Degenerate(format!("need >= 2 replicas, got {n}")));
        }
        let nf = n as f64;
        // Variance from exact integer sums: (n Σx² - (Σx)²) / (n (n-1)).
        let var = |s: u128, s2: u128| ((n as u128 * s2 - s * s) as f64) / (nf * (nf - 1.0));
        let a: Vec<f64> = self.sum.iter().map(|&s| s as f64 / nf).collect();
        let a_se = self.sum.iter().zip(&self.sum_sq).map(|(&s, &s2)| (var(s, s2) / nf).sqrt()).collect();
        let big_a = self.cum_sum.iter().map(|&s| s as f64 / nf).collect();
        let b2 = self.cum_sum.iter().zip(&self.cum_sum_sq).map(|(&s, &s2)| var(s, s2)).collect();
        Ok(Estimators { replicas: n as usize, a, a_se, big_a, b2 })
    }
}

/// `â(k)`, `Â(n)` and `b̂(n)²` for `k, n = 1..K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimators {
    pub replicas: usize,
    pub a: Vec<f64>,
    pub a_se: Vec<f64>,
    pub big_a: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Estimators {
    pub fn scales(&self) -> u32 {
        self.a.len() as u32
    }

    pub fn a_hat(&self, k: u32) -> f64 {
        self.a[k as usize - 1]
    }

    /// `Â(n)`, with `Â(0) = 0`.
    pub fn big_a_hat(&self, n: u32) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.big_a[n as usize - 1]
        }
    }

    pub fn b2_hat(&self, n: u32) -> f64 {
        self.b2[n as usize - 1]
    }

    /// `T_x = min{k : Â(k) >= x}`, if reached within the table.
    pub fn t_index(&self, x: f64) -> Option<u32> {
        if x <= 0.0 {
            return Some(0);
        }
        self.big_a.iter().position(|&v| v >= x).map(|i| i as u32 + 1)
    }

    /// `σ̂_n`, the sample SD of `O(T_n)`.
    pub fn sigma(&self, x: f64) -> Option<f64> {
        self.t_index(x).filter(|&t| t > 0).map(|t| self.b2_hat(t).sqrt())
    }

    /// Residuals `X_k = O_k - â(k)` of every replica.
    pub fn residuals(&self, table: &CountTable) -> Vec<Vec<f64>> {
        table.rows().iter().map(|r| r.iter().zip(&self.a).map(|(o, a)| o - a).collect()).collect()
    }
}

/// Sample moments of a count table, folded in replica order.
pub fn estimate_moments(table: &CountTable) -> Result<Estimators, EnsembleError> {
    if table.replicas() < 2 {
        return Err(EnsembleError::Degenerate(format!("need >= 2 replicas, got {}", table.replicas())));
    }
    let mut a = Vec::new();
    let mut a_se = Vec::new();
    let mut big_a = Vec::new();
    let mut b2 = Vec::new();
    for k in 1..=table.scales() {
        let m: Moments = table.column(k).into_iter().collect();
        a.push(m.mean);
        a_se.push(m.std_err());
        let c: Moments = table.cumulative(k).into_iter().collect();
        big_a.push(c.mean);
        b2.push(c.variance());
    }
    Ok(Estimators { replicas: table.replicas(), a, a_se, big_a, b2 })
}

/// Normality check of the standardised cumulative count at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltVerdict {
    pub n: u32,
    pub replicas: usize,
    /// KS statistic and p-value after Uniform(-1/2, 1/2) jitter of the counts.
    pub ks: f64,
    pub p_value: f64,
    /// The same without jitter.
    pub ks_raw: f64,
    pub p_value_raw: f64,
}

/// KS test of `(O(n) - Â(n)) / b̂(n)` against the standard normal. The
/// jittered variant adds an independent Uniform(-1/2, 1/2) to each count
/// before standardising, which spreads the integer lattice of `O(n)`.
pub fn clt_verdict(table: &CountTable, est: &Estimators, n: u32, seed: u64) -> Result<CltVerdict, EnsembleError> {
    let b = est.b2_hat(n).sqrt();
    if b.is_nan() || b <= 0.0 {
        return Err(EnsembleError::Degenerate(format!("b(n) = 0 at n = {n}")));
    }
    let mean = est.big_a_hat(n);
    let values = table.cumulative(n);
    let mut raw: Vec<f64> = values.iter().map(|o| (o - mean) / b).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jittered: Vec<f64> = values.iter().map(|o| (o + rng.gen_range(-0.5..0.5) - mean) / b).collect();
    let (ks, p_value) = ks_normal(&mut jittered);
    let (ks_raw, p_value_raw) = ks_normal(&mut raw);
    Ok(CltVerdict { n, replicas: values.len(), ks, p_value, ks_raw, p_value_raw })
}

/// Normalised deviations `|O(n) - Â(n)| / n^r` along one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SllnPath {
    pub r: f64,
    /// `r <= 1/2` lies outside the range where the path must vanish.
    pub rate_too_small: bool,
    /// Indexed by `n - 1`.
    pub values: Vec<f64>,
}

impl SllnPath {
    pub fn value(&self, n: u32) -> f64 {
        self.values[n as usize - 1]
    }

    /// `max_{n >= n0} |O(n) - Â(n)| / n^r`.
    pub fn tail_max(&self, n0: u32) -> f64 {
        self.values[n0.max(1) as usize - 1..].iter().copied().fold(0.0, f64::max)
    }
}

pub fn slln_path(counts: &[f64], est: &Estimators, r: f64) -> SllnPath {
    let mut cum = 0.0;
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            cum += o;
            let n = (i + 1) as f64;
            (cum - est.big_a[i]).abs() / n.powf(r)
        })
        .collect();
    SllnPath { r, rate_too_small: r <= 0.5, values }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovRow {
    pub k: u32,
    /// `ĉ(k) = max_j |Cov(X_j, X_{j+k})|`.
    pub c: f64,
    /// Standard error of the maximising covariance.
    pub std_err: f64,
    /// The maximising `j`.
    pub j: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDecay {
    pub rows: Vec<CovRow>,
    /// `ln ĉ(k)` against `k`, weighted by `(ĉ / SE)²`; the slope is the rate.
    pub fit: Option<LinearFit>,
    /// `SE(ĉ(k)) < ĉ(0) / 10` for every row.
    pub precise: bool,
}

/// Standard error of the sample covariance of `x` and `y`.
fn covariance_se(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let p: Moments = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    p.std_err()
}

/// `ĉ(k)` for `k = 0..=k_max` over `j >= j_min` with `j + k <= K`.
pub fn covariance_decay(table: &CountTable, est: &Estimators, j_min: u32, k_max: u32) -> CovarianceDecay {
    let scales = table.scales();
    let x = est.residuals(table);
    let col = |j: u32| x.iter().map(|r| r[j as usize - 1]).collect::<Vec<f64>>();
    let mut rows = Vec::new();
    for k in 0..=k_max {
        let mut best: Option<CovRow> = None;
        for j in j_min.max(1)..=scales.saturating_sub(k) {
            let (xj, xk) = (col(j), col(j + k));
            let c = covariance(&xj, &xk).abs();
            if best.is_none_or(|b| c > b.c) {
                best = Some(CovRow { k, c, std_err: covariance_se(&xj, &xk), j });
            }
        }
        if let Some(b) = best {
            rows.push(b);
        }
    }
    let kept: Vec<&CovRow> = rows.iter().filter(|r| r.c > 0.0 && r.std_err > 0.0).collect();
    let xs: Vec<f64> = kept.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.c.ln()).collect();
    let ws: Vec<f64> = kept.iter().map(|r| (r.c / r.std_err).powi(2)).collect();
    let fit = linear_fit(&xs, &ys, Some(&ws));
    let c0 = rows.first().map_or(0.0, |r| r.c);
    let precise = rows.iter().all(|r| r.std_err < c0 / 10.0);
    CovarianceDecay { rows, fit, precise }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub k: u32,
    /// `Ê O_k^t`.
    pub value: f64,
    pub ci: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSumRow {
    pub m: u32,
    /// `max_k Ê|Σ_{j=k}^{k+m} X_j|^t` over the windows that fit.
    pub value: f64,
    /// `value / m^(t/2)`.
    pub normalized: f64,
    pub windows: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub t: u32,
    pub moments: Vec<MomentRow>,
    pub partial: Vec<PartialSumRow>,
    /// Gaps that do not fit inside the table.
    pub missing: Vec<u32>,
    /// `ln value` against `ln m`; bounded growth means slope near `t/2`.
    pub fit: Option<LinearFit>,
}

/// Empirical `t`-th moments of `O_k` with bootstrap CIs, and `t`-th
/// absolute moments of residual partial sums across gaps `ms`.
pub fn moment_bound_check(
    table: &CountTable,
    est: &Estimators,
    t: u32,
    ms: &[u32],
    seed: u64,
) -> Result<MomentBound, EnsembleError> {
    if !(1..=4).contains(&t) {
        return Err(EnsembleError::Invalid(format!("moment order must be 1..=4, got {t}")));
    }
    let ti = t as i32;
    let moments = (1..=table.scales())
        .map(|k| {
            let col = table.column(k);
            let stat = |xs: &[f64]| xs.iter().map(|x| x.powi(ti)).sum::<f64>() / xs.len() as f64;
            let value = stat(&col);
            let ci = bootstrap_ci(&col, stat, BOOTSTRAP_RESAMPLES, 0.95, seed ^ k as u64);
            MomentRow { k, value, ci }
        })
        .collect();
    let x = est.residuals(table);
    let mut partial = Vec::new();
    let mut missing = Vec::new();
    for &m in ms {
        let mut best: Option<f64> = None;
        let mut windows = 0;
        let mut k = 1;
        while k + m <= table.scales() {
            let v = x
                .iter()
                .map(|r| r[k as usize - 1..=(k + m) as usize - 1].iter().sum::<f64>().abs().powi(ti))
                .sum::<f64>()
                / x.len() as f64;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
            windows += 1;
            k += 1;
        }
        match best {
            Some(value) => partial.push(PartialSumRow {
                m,
                value,
                normalized: value / (m as f64).powf(t as f64 / 2.0),
                windows,
            }),
            None => missing.push(m),
        }
    }
    let xs: Vec<f64> = partial.iter().map(|p| (p.m as f64).ln()).collect();
    let ys: Vec<f64> = partial.iter().filter(|p| p.value > 0.0).map(|p| p.value.ln()).collect();
    let fit = if xs.len() == ys.len() { linear_fit(&xs, &ys, None) } else { None };
    Ok(MomentBound { t, moments, partial, missing, fit })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalRow {
    pub lambda: f64,
    /// `P̂(max_{i<=n} |Σ_{k<=i} X_k| >= λ)`.
    pub p_hat: f64,
    /// `n/λ² + √n/λ`.
    pub shape: f64,
    /// `P̂ · min(λ²/n, λ/√n)`.
    pub product: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalInequality {
    pub n: u32,
    pub rows: Vec<MaximalRow>,
    /// Smallest `C` with `P̂ <= C · shape` on the grid.
    pub c_fit: f64,
    pub max_product: f64,
}

pub fn maximal_inequality_check(table: &CountTable, est: &Estimators, n: u32, lambdas: &[f64]) -> MaximalInequality {
    let x = est.residuals(table);
    let maxima: Vec<f64> = x
        .iter()
        .map(|r| {
            let mut s = 0.0;
            r[..n as usize].iter().fold(0.0f64, |m, v| {
                s += v;
                m.max(s.abs())
            })
        })
        .collect();
    let nf = n as f64;
    let rows: Vec<MaximalRow> = lambdas
        .iter()
        .map(|&lambda| {
            let p_hat = maxima.iter().filter(|&&m| m >= lambda).count() as f64 / maxima.len() as f64;
            let shape = if lambda > 0.0 { nf / (lambda * lambda) + nf.sqrt() / lambda } else { f64::INFINITY };
            let product = p_hat * (lambda * lambda / nf).min(lambda / nf.sqrt());
            MaximalRow { lambda, p_hat, shape, product }
        })
        .collect();
    let c_fit = rows.iter().filter(|r| r.shape.is_finite()).map(|r| r.p_hat / r.shape).fold(0.0, f64::max);
    let max_product = rows.iter().map(|r| r.product).fold(0.0, f64::max);
    MaximalInequality { n, rows, c_fit, max_product }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerDeviationRow {
    pub alpha: f64,
    /// `P̂(O(n, n+m) <= α m)`.
    pub p_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerDeviation {
    pub n: u32,
    pub m: u32,
    pub rows: Vec<LowerDeviationRow>,
}

pub fn lower_deviation_check(
    table: &CountTable,
    n: u32,
    m: u32,
    alphas: &[f64],
) -> Result<LowerDeviation, EnsembleError> {
    if n + m > table.scales() {
        return Err(EnsembleError::InsufficientData { n: (n + m) as u64, excluded: table.replicas(), total: table.replicas() });
    }
    let w = table.window(n, m);
    let rows = alphas
        .iter()
        .map(|&alpha| LowerDeviationRow {
            alpha,
            p_hat: w.iter().filter(|&&o| o <= alpha * m as f64).count() as f64 / w.len() as f64,
        })
        .collect();
    Ok(LowerDeviation { n, m, rows })
}

/// `Q_n = min{k : O(k) >= n}` of one count row.
pub fn q_of_row(row: &[f64], n: u64) -> Option<u32> {
    if n == 0 {
        return Some(0);
    }
    let mut cum = 0.0;
    for (i, &o) in row.iter().enumerate() {
        cum += o;
        if cum >= n as f64 {
            return Some(i as u32 + 1);
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseCltVerdict {
    pub n: u64,
    pub t_n: u32,
    pub sigma_n: f64,
    pub included: usize,
    pub excluded: usize,
    pub ks: f64,
    pub p_value: f64,
    /// Sample mean of `((Â(Q_n) - n) / σ̂_n)²`.
    pub second_moment: f64,
    pub second_moment_ci: (f64, f64),
}

/// Largest excluded fraction accepted by the inverse checks.
pub const MAX_EXCLUDED: f64 = 0.05;

/// `(Â(q) - n) / σ̂_n` for given scale indices `q`.
pub fn inverse_statistic(est: &Estimators, q: &[u32], n: u64, sigma_n: f64) -> Vec<f64> {
    q.iter().map(|&k| (est.big_a_hat(k) - n as f64) / sigma_n).collect()
}

fn check_exclusions(n: u64, excluded: usize, total: usize) -> Result<(), EnsembleError> {
    if excluded as f64 > MAX_EXCLUDED * total as f64 {
        Err(EnsembleError::InsufficientData { n, excluded, total })
    } else {
        Ok(())
    }
}

fn t_and_sigma(est: &Estimators, n: u64) -> Result<(u32, f64), EnsembleError> {
    let t = est
        .t_index(n as f64)
        .ok_or_else(|| EnsembleError::Degenerate(format!("Â never reaches {n} within {} scales", est.scales())))?;
    let sigma = est.b2_hat(t.max(1)).sqrt();
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(EnsembleError::Degenerate(format!("σ_n = 0 at n = {n}")));
    }
    Ok((t, sigma))
}

/// KS test and second moment of `(Â(Q_n) - n) / σ̂_n`. Replicas whose
/// counts never reach `n` are excluded and counted.
pub fn inverse_clt_verdict(
    table: &CountTable,
    est: &Estimators,
    n: u64,
    seed: u64,
) -> Result<InverseCltVerdict, EnsembleError> {
    let q: Vec<Option<u32>> = table.rows().iter().map(|r| q_of_row(r, n)).collect();
    let included: Vec<u32> = q.iter().flatten().copied().collect();
    let excluded = q.len() - included.len();
    check_exclusions(n, excluded, q.len())?;
    let (t_n, sigma_n) = t_and_sigma(est, n)?;
    let mut z = inverse_statistic(est, &included, n, sigma_n);
    let mean_sq = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    let second_moment = mean_sq(&z);
    let second_moment_ci = bootstrap_ci(&z, mean_sq, BOOTSTRAP_RESAMPLES, 0.95, seed);
    let (ks, p_value) = ks_normal(&mut z);
    Ok(InverseCltVerdict {
        n,
        t_n,
        sigma_n,
        included: included.len(),
        excluded,
        ks,
        p_value,
        second_moment,
        second_moment_ci,
    })
}

/// Estimates `p̂_{2^k}` indexed by the exponent `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PTable {
    pub entries: Vec<(u32, f64)>,
}

impl PTable {
    pub fn get(&self, k: u32) -> Option<f64> {
        self.entries.iter().find(|(e, _)| *e == k).map(|(_, p)| *p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    /// `Ê(Y - T_n)² / n`.
    pub value: f64,
    pub ci: (f64, f64),
    /// `Ê(Y - ÊY)² / n`.
    pub centered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationRatios {
    pub n: u64,
    pub t_n: u32,
    pub included: usize,
    pub excluded: usize,
    /// `Y = Q_n`.
    pub q: Ratio,
    /// `Y = log₂ R̂_n`.
    pub radius: Ratio,
    /// `Ê(log₂((τ̂_n - p_c) / (p̂_{2^{T_n}} - p_c)))² / n`, centred at 0.
    pub weight: Ratio,
}

/// Per-replica `(Q_n, log₂ R̂_n, τ̂_n)` when the replica has `n` certified
/// outlets.
pub fn pond_observables(r: &ReplicaRecord, n: u64) -> Option<(u32, f64, f64)> {
    let j = n as usize;
    Some((r.q_index(n)?, (r.pond_radius(j)?.max(1) as f64).log2(), r.outlet_weight(j)?))
}

fn ratio(values: &[f64], centre: f64, n: u64, seed: u64) -> Ratio {
    let nf = n as f64;
    let stat = move |xs: &[f64]| xs.iter().map(|x| (x - centre).powi(2)).sum::<f64>() / (xs.len() as f64 * nf);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (values.len() as f64 * nf);
    Ratio { value: stat(values), ci: bootstrap_ci(values, stat, BOOTSTRAP_RESAMPLES, 0.95, seed), centered }
}

/// The three normalised fluctuation ratios at outlet index `n`.
pub fn fluctuation_ratios(
    records: &[ReplicaRecord],
    est: &Estimators,
    n: u64,
    p: &PTable,
    seed: u64,
) -> Result<FluctuationRatios, EnsembleError> {
    let obs: Vec<(u32, f64, f64)> = records.iter().filter_map(|r| pond_observables(r, n)).collect();
    let excluded = records.len() - obs.len();
    check_exclusions(n, excluded, records.len())?;
    let (t_n, _) = t_and_sigma(est, n)?;
    let p_t = p
        .get(t_n)
        .ok_or_else(|| EnsembleError::Degenerate(format!("no p̂ for scale 2^{t_n}")))?;
    let t = t_n as f64;
    let q: Vec<f64> = obs.iter().map(|o| o.0 as f64).collect();
    let rad: Vec<f64> = obs.iter().map(|o| o.1).collect();
    let w: Vec<f64> = obs.iter().map(|o| ((o.2 - P_C) / (p_t - P_C)).log2()).collect();
    Ok(FluctuationRatios {
        n,
        t_n,
        included: obs.len(),
        excluded,
        q: ratio(&q, t, n, seed),
        radius: ratio(&rad, t, n, seed ^ 1),
        weight: ratio(&w, 0.0, n, seed ^ 2),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsequenceRow {
    pub n: u64,
    pub t_n: u32,
    /// `(Q_n - T_n) / n^r`.
    pub q: f64,
    /// `(log₂ R̂_n - T_n) / n^r`.
    pub radius: f64,
    /// `log₂((τ̂_n - p_c) / (p̂_{2^{T_n}} - p_c)) / n^r`.
    pub weight: f64,
}

/// The three trajectories on one path, for every `n` where the record has
/// `n` certified outlets and `T_n` and `p̂_{2^{T_n}}` are known.
pub fn slln_consequences(r: &ReplicaRecord, est: &Estimators, rate: f64, p: &PTable) -> Vec<ConsequenceRow> {
    (1..=r.certified_len() as u64)
        .map_while(|n| {
            let (q, rad, tau) = pond_observables(r, n)?;
            let t_n = est.t_index(n as f64)?;
            let p_t = p.get(t_n)?;
            let scale = (n as f64).powf(rate);
            Some(ConsequenceRow {
                n,
                t_n,
                q: (q as f64 - t_n as f64) / scale,
                radius: (rad - t_n as f64) / scale,
                weight: ((tau - P_C) / (p_t - P_C)).log2() / scale,
            })
        })
        .collect()
}
