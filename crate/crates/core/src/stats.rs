//! Small statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// A Monte Carlo mean with its normal-approximation 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub half_width: f64,
    /// Standard error of `value`, `sd / sqrt(replicates)`.
    pub std_error: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl EstimateWithCI {
    /// Mean of `samples` with sample standard deviation (n - 1 denominator).
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(invalid("replicates", format!("need at least 2, got {n}")));
        }
        let (mean, var) = mean_var(samples);
        let se = (var / n as f64).sqrt();
        Ok(Self {
            value: mean,
            half_width: Z95 * se,
            std_error: se,
            replicates: n,
            seed,
        })
    }

    /// Frequency of `true` among the outcomes.
    pub fn from_indicators(outcomes: &[bool], seed: u64) -> Result<Self> {
        let xs: Vec<f64> = outcomes.iter().map(|&b| f64::from(u8::from(b))).collect();
        Self::from_samples(&xs, seed)
    }

    /// The estimate of `c * X`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            value: c * self.value,
            half_width: c.abs() * self.half_width,
            std_error: c.abs() * self.std_error,
            ..*self
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.half_width
    }
}

/// `sqrt(se_a^2 + se_b^2)` for independent estimates.
pub fn combined_sigma(a: &EstimateWithCI, b: &EstimateWithCI) -> f64 {
    a.std_error.hypot(b.std_error)
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against Uniform(lo, hi).
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut v: Vec<f64> = samples.iter().map(|x| (x - lo) / (hi - lo)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &u)| {
            let above = (i + 1) as f64 / n - u;
            let below = u - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}
