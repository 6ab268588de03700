//! Small statistics toolkit: streaming moments with merge, one-sample
//! Kolmogorov-Smirnov tests, percentile bootstrap and least-squares fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Streaming mean and variance (Welford), mergeable with Chan's formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    /// Unbiased sample variance; 0 with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// A Monte Carlo proportion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub replicas: u64,
}

impl Estimate {
    pub fn from_count(hits: u64, replicas: u64) -> Self {
        let mean = hits as f64 / replicas as f64;
        Estimate { mean, std_err: (mean * (1.0 - mean) / replicas as f64).sqrt(), replicas }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<Moments>().variance()
}

/// Sample covariance with `n - 1` normalisation.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{j>=1} (-1)^(j-1) exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic and asymptotic p-value (Stephens' small-sample
/// correction). Sorts `data` in place.
pub fn ks_test<F: Fn(f64) -> f64>(data: &mut [f64], cdf: F) -> (f64, f64) {
    data.sort_by(|a, b| a.total_cmp(b));
    let n = data.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in data.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

pub fn ks_uniform(data: &mut [f64]) -> (f64, f64) {
    ks_test(data, |x| x.clamp(0.0, 1.0))
}

pub fn ks_normal(data: &mut [f64]) -> (f64, f64) {
    ks_test(data, std_normal_cdf)
}

/// Percentile bootstrap interval for `stat` at coverage `level`.
pub fn bootstrap_ci<T: Clone, F: Fn(&[T]) -> f64>(
    data: &[T],
    stat: F,
    resamples: usize,
    level: f64,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(data.len());
    let mut vals: Vec<f64> = (0..resamples)
        .map(|_| {
            buf.clear();
            buf.extend((0..data.len()).map(|_| data[rng.gen_range(0..data.len())].clone()));
            stat(&buf)
        })
        .filter(|v| v.is_finite())
        .collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| vals[((p * (vals.len() - 1) as f64).round() as usize).min(vals.len() - 1)];
    let alpha = (1.0 - level) / 2.0;
    (q(alpha), q(1.0 - alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% confidence interval for the slope.
    pub slope_ci: (f64, f64),
    pub n: usize,
}

impl LinearFit {
    pub fn ci_excludes_zero(&self) -> bool {
        self.slope_ci.0 > 0.0 || self.slope_ci.1 < 0.0
    }
}

/// Weighted least squares `y = a + b x` with weights `w` (inverse variances).
/// With `None`, ordinary least squares. The slope standard error uses the
/// residual scatter, so it is valid for either choice.
pub fn linear_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Option<LinearFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let ones = vec![1.0; n];
    let w = w.unwrap_or(&ones);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (c - intercept - slope * a).powi(2))
        .sum();
    // Weights normalised to mean 1 so the residual variance has its usual scale.
    let scale = n as f64 / sw;
    let sigma2 = rss * scale / (n - 2) as f64;
    let slope_se = (sigma2 / (sxx * scale)).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 2) as f64).unwrap().inverse_cdf(0.975);
    Some(LinearFit { slope, intercept, slope_se, slope_ci: (slope - t * slope_se, slope + t * slope_se), n })
}

/// Fit of `ln P̂` against `x` over the points with `P̂ > 0`, weighted by the
/// delta-method inverse variance `N P / (1 - P)`.
pub fn log_proportion_fit(x: &[f64], points: &[Estimate]) -> Option<LinearFit> {
    let kept: Vec<(f64, &Estimate)> = x.iter().copied().zip(points).filter(|(_, e)| e.mean > 0.0).collect();
    let xs: Vec<f64> = kept.iter().map(|(x, _)| *x).collect();
    let ys: Vec<f64> = kept.iter().map(|(_, e)| e.mean.ln()).collect();
    let w: Vec<f64> = kept.iter().map(|(_, e)| e.replicas as f64 * e.mean / (1.0 - e.mean).max(1e-12)).collect();
    linear_fit(&xs, &ys, Some(&w))
}

/// Ratio of the largest to the smallest value; infinite when the smallest
/// is not positive.
pub fn max_min_ratio(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
