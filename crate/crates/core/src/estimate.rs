//! Mergeable Monte Carlo accumulators and the comparison statistics used
//! by the identity verdicts.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Running mean / sum of squared deviations / count (Welford form).
///
/// `merge` uses the pairwise update, which is exact in real arithmetic;
/// callers that need bitwise reproducibility must merge in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub m2: f64,
    pub n: u64,
}

impl MCEstimate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut est = Self::new();
        for &v in values {
            est.push(v);
        }
        est
    }

    pub fn merge(&mut self, other: &MCEstimate) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n_total = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n_total as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n_total as f64;
        self.n = n_total;
    }

    /// Sample variance (unbiased).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2 / (self.n - 1) as f64
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n as f64 * (self.n - 1) as f64)).sqrt()
    }
}

/// Mean and standard error, the shape reports serialize.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl From<&MCEstimate> for MeanSe {
    fn from(e: &MCEstimate) -> Self {
        MeanSe { mean: e.mean, se: e.se(), n: e.n }
    }
}

/// Welch z statistic for two independent estimates. Zero-SE sides are
/// legitimate (some identities are exact on one side): equal means give
/// z = 0, unequal means with zero combined SE give an infinite statistic.
pub fn welch_z(left: &MCEstimate, right: &MCEstimate) -> f64 {
    let var = left.se().powi(2) + right.se().powi(2);
    let diff = left.mean - right.mean;
    if var == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / var.sqrt()
    }
}

pub fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Two-sided p-value of a normal statistic.
pub fn p_value_two_sided(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    2.0 * (1.0 - standard_normal().cdf(z.abs()))
}

/// Two-sided critical value at the given confidence level.
pub fn critical_value(confidence: f64) -> f64 {
    standard_normal().inverse_cdf(0.5 + confidence / 2.0)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample critical value for the two-sample KS test.
pub fn ks_critical(level: f64, na: usize, nb: usize) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}
