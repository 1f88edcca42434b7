//! Centered Gaussian fields with stationary increments, pinned to zero at
//! the origin, sampled jointly at arbitrary finite site sets via Cholesky
//! factorization of the covariance implied by a variogram.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PathSample, PointSet};
use crate::stream::Stream;

/// Variogram `v(h) = theta * |h|_2^(2H)`. Depends on the lag only, which
/// is exactly the condition under which the log-normal construction
/// yields a shift-generated class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variogram {
    Fractional { theta: f64, hurst: f64 },
}

impl Variogram {
    pub fn fractional(theta: f64, hurst: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Config(format!("variogram scale must be positive, got {theta}")));
        }
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(Error::Config(format!("hurst exponent must lie in (0, 1], got {hurst}")));
        }
        Ok(Variogram::Fractional { theta, hurst })
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        match *self {
            Variogram::Fractional { theta, hurst } => {
                let r2: f64 = h.iter().map(|x| x * x).sum();
                if r2 == 0.0 {
                    0.0
                } else {
                    theta * r2.powf(hurst)
                }
            }
        }
    }
}

/// Covariance of the pinned field: `Cov(W(s), W(t)) = (v(s) + v(t) - v(s - t)) / 2`,
/// so `W(0) = 0` almost surely and `Var W(t) = v(t)`.
pub fn cov_from_variogram(s: &[f64], t: &[f64], model: &Variogram) -> f64 {
    let diff: Vec<f64> = s.iter().zip(t).map(|(a, b)| a - b).collect();
    (model.value(s) + model.value(t) - model.value(&diff)) / 2.0
}

pub const DEFAULT_JITTER: f64 = 1e-10;
const JITTER_RETRIES: usize = 3;

/// Sampler description. Components of a `d`-valued field are drawn as
/// independent copies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussianSampler {
    pub variogram: Variogram,
    pub jitter: f64,
}

impl GaussianSampler {
    pub fn new(variogram: Variogram) -> Self {
        Self { variogram, jitter: DEFAULT_JITTER }
    }

    /// Factor the covariance at `sites` once; draws are then matrix-vector
    /// products. Fails with the smallest-eigenvalue estimate if the matrix
    /// resists jitter escalation.
    pub fn prepare(&self, sites: &PointSet, dim_d: usize) -> Result<PreparedGaussian> {
        let n = sites.len();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            cov_from_variogram(sites.point(i), sites.point(j), &self.variogram)
        });

        let mut jitter = self.jitter;
        let mut chol = None;
        for _ in 0..=JITTER_RETRIES {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(c) = m.cholesky() {
                chol = Some(c);
                break;
            }
            jitter *= 10.0;
        }
        let chol = chol.ok_or_else(|| {
            let min_eig = cov
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            Error::Numerical(format!(
                "Cholesky failed for {n}x{n} covariance after jitter escalation to {jitter:e}; \
                 minimum eigenvalue estimate {min_eig:e}"
            ))
        })?;

        let origin_rows =
            (0..n).filter(|&i| sites.point(i).iter().all(|&x| x == 0.0)).collect();
        let variances = (0..n).map(|i| self.variogram.value(sites.point(i))).collect();
        Ok(PreparedGaussian {
            sites: sites.clone(),
            factor: chol.unpack(),
            variances,
            origin_rows,
            dim_d,
        })
    }
}

/// Cholesky factor plus site metadata, reusable across draws.
#[derive(Debug, Clone)]
pub struct PreparedGaussian {
    sites: PointSet,
    factor: DMatrix<f64>,
    variances: Vec<f64>,
    origin_rows: Vec<usize>,
    dim_d: usize,
}

impl PreparedGaussian {
    pub fn sites(&self) -> &PointSet {
        &self.sites
    }

    /// `Var W(t_i) = v(t_i)` per site, shared by all components.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    /// One joint draw of all components at all sites. Sites exactly at the
    /// origin receive the value 0 exactly.
    pub fn draw(&self, rng: &mut Stream) -> Result<PathSample> {
        let n = self.sites.len();
        let d = self.dim_d;
        let mut values = vec![0.0; n * d];
        for j in 0..d {
            let g = DVector::from_fn(n, |_, _| rand::Rng::sample(rng, StandardNormal));
            let w = &self.factor * g;
            for i in 0..n {
                values[i * d + j] = w[i];
            }
        }
        for &i in &self.origin_rows {
            for j in 0..d {
                values[i * d + j] = 0.0;
            }
        }
        PathSample::new(self.sites.clone(), d, values)
    }
}
