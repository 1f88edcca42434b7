//! The de Haan series sampler for the max-stable field generated by a
//! representor, the exponent-functional estimator that pins down its
//! finite-dimensional laws, and the stationarity check built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{MCEstimate, MeanSe};
use crate::field::{shift_points, PointSet};
use crate::sample::{PathSource, PreparedSource};
use crate::stream::{derive_stream, estimate_mean, lane, DrawDiag, Stream};
use crate::verify::{decide, IdentityReport};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeHaanConfig {
    /// Series truncation cap.
    pub max_terms: usize,
    /// Quantile of the pilot sup used as the spectral bound estimate.
    pub stop_quantile: f64,
    /// Empirical high quantile of `sup_sites |Z|`; estimated by
    /// `pilot_sup_bound` when absent.
    pub sup_bound_estimate: Option<f64>,
}

impl Default for DeHaanConfig {
    fn default() -> Self {
        Self { max_terms: 500, stop_quantile: 0.9999, sup_bound_estimate: None }
    }
}

/// One max-stable path plus its truncation diagnostic: the ratio of the
/// last unexplored series bound to the smallest accumulated maximum.
#[derive(Debug, Clone)]
pub struct MaxStableSample {
    pub path: crate::field::PathSample,
    pub truncation: f64,
    pub warned: bool,
}

const TRUNCATION_WARN: f64 = 0.05;

/// Estimate the stopping bound from a pilot: the `stop_quantile` of
/// `sup over sites of |Z|` across pilot draws.
pub fn pilot_sup_bound(
    source: &dyn PathSource,
    sites: &PointSet,
    dcfg: &DeHaanConfig,
    pilot_n: u64,
    master_seed: u64,
) -> Result<f64> {
    let norm = source.cfg().norm;
    let prepared = source.prepare(sites)?;
    let mut sups = Vec::with_capacity(pilot_n as usize);
    for rep in 0..pilot_n {
        let mut rng = derive_stream(master_seed, lane::PILOT, rep);
        let draw = prepared.draw(&mut rng)?;
        sups.push(draw.path.norms(norm).into_iter().fold(0.0_f64, f64::max));
    }
    sups.sort_by(f64::total_cmp);
    let idx = ((dcfg.stop_quantile * pilot_n as f64).ceil() as usize).min(sups.len()) - 1;
    Ok(sups[idx].max(f64::MIN_POSITIVE))
}

/// One draw of the max-stable field at the prepared sites: accumulate the
/// componentwise maximum of `Z_i(t) / Gamma_i^(1/alpha)` over Poisson
/// arrivals `Gamma_i` until no future term can raise the running minimum,
/// or the term cap is hit.
///
/// Representor values must be nonnegative; signed scalar fields go
/// through `signed_split` first. A component that stays zero on every
/// draw keeps the running minimum at zero, in which case the series runs
/// to the cap and the sample carries a truncation warning.
pub fn dehaan_sample(
    prepared: &dyn PreparedSource,
    alpha: f64,
    dcfg: &DeHaanConfig,
    sup_bound: f64,
    rng: &mut Stream,
) -> Result<MaxStableSample> {
    let mut gamma = 0.0_f64;
    let mut shape: Option<(PointSet, usize)> = None;
    let mut acc: Vec<f64> = Vec::new();
    let mut bound = f64::INFINITY;
    for _ in 0..dcfg.max_terms {
        let e: f64 = rand::Rng::sample(rng, rand_distr::Exp1);
        gamma += e;
        let factor = gamma.powf(-1.0 / alpha);
        let draw = prepared.draw(rng)?;
        if draw.weight != 1.0 {
            return Err(Error::Contract(
                "dehaan_sample requires unit-weight draws; use exact or sir tilting".into(),
            ));
        }
        let values = draw.path.values();
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Contract(
                "dehaan_sample requires nonnegative representor values; apply signed_split".into(),
            ));
        }
        if shape.is_none() {
            shape = Some((draw.path.sites().clone(), draw.path.dim_d()));
            acc = values.iter().map(|&v| factor * v).collect();
        } else {
            for (a, &v) in acc.iter_mut().zip(values) {
                *a = a.max(factor * v);
            }
        }
        bound = factor * sup_bound;
        let current_min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        if bound < current_min {
            let (sites, dim_d) = shape.unwrap();
            let path = crate::field::PathSample::new(sites, dim_d, acc)?;
            return Ok(MaxStableSample { path, truncation: bound / current_min, warned: false });
        }
    }
    let (sites, dim_d) =
        shape.ok_or_else(|| Error::Config("dehaan max_terms must be >= 1".into()))?;
    let current_min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let truncation = if current_min > 0.0 { bound / current_min } else { f64::INFINITY };
    let path = crate::field::PathSample::new(sites, dim_d, acc)?;
    Ok(MaxStableSample { path, truncation, warned: truncation > TRUNCATION_WARN })
}

/// Thresholds paired with sites: the query whose answer
/// `V = E max_i (|Z(t_i)| / x_i)^alpha` determines
/// `P(X(t_i) <= x_i for all i) = exp(-V)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentQuery {
    pub sites: PointSet,
    pub thresholds: Vec<f64>,
}

impl ExponentQuery {
    pub fn new(sites: PointSet, thresholds: Vec<f64>) -> Result<Self> {
        if sites.len() != thresholds.len() || sites.is_empty() {
            return Err(Error::Config(
                "exponent query needs one positive threshold per site".into(),
            ));
        }
        if thresholds.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("exponent thresholds must be positive".into()));
        }
        Ok(Self { sites, thresholds })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: MeanSe,
    /// `exp(-V)`: the finite-dimensional CDF at the query thresholds.
    pub fidi_cdf: f64,
    pub diag: DrawDiag,
}

/// Monte Carlo estimate of the exponent functional over representor
/// draws.
pub fn exponent_estimate(
    source: &dyn PathSource,
    query: &ExponentQuery,
    n: u64,
    master_seed: u64,
    est_lane: u32,
    pool: &rayon::ThreadPool,
) -> Result<ExponentEstimate> {
    if n < 1000 {
        return Err(Error::Contract("exponent estimation needs at least 1e3 samples".into()));
    }
    let cfg = source.cfg().clone();
    let prepared = source.prepare(&query.sites)?;
    let thresholds = query.thresholds.clone();
    let out = estimate_mean(pool, master_seed, est_lane, n, |_, rng| {
        let draw = prepared.draw(rng)?;
        let norms = draw.path.norms(cfg.norm);
        let v = norms
            .iter()
            .zip(&thresholds)
            .map(|(&nv, &x)| (nv / x).powf(cfg.alpha))
            .fold(0.0_f64, f64::max);
        Ok((draw.weight * v, draw.diag))
    })?;
    Ok(ExponentEstimate {
        value: MeanSe::from(&out.est),
        fidi_cdf: (-out.est.mean).exp(),
        diag: out.diag,
    })
}

/// Compare the exponent functional of `rep_a` at `sites` against that of
/// `rep_b` at the sites shifted by `h`. Equal exponent functionals at all
/// shifts is what "the generated max-stable fields share one stationary
/// law" means at the finite-dimensional level.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_check(
    rep_a: &dyn PathSource,
    rep_b: &dyn PathSource,
    sites: &PointSet,
    h: &[f64],
    thresholds: &[f64],
    n: u64,
    confidence: f64,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<IdentityReport> {
    let query_a = ExponentQuery::new(sites.clone(), thresholds.to_vec())?;
    let shifted = shift_points(sites, &h.iter().map(|v| -v).collect::<Vec<_>>())?;
    let query_b = ExponentQuery::new(shifted, thresholds.to_vec())?;

    let left = exponent_estimate(rep_a, &query_a, n, master_seed, lane::LEFT, pool)?;
    let right = exponent_estimate(rep_b, &query_b, n, master_seed, lane::RIGHT, pool)?;

    let left_est = MCEstimate { mean: left.value.mean, m2: 0.0, n: left.value.n };
    let right_est = MCEstimate { mean: right.value.mean, m2: 0.0, n: right.value.n };
    // Rebuild m2 from the serialized SE so `decide` sees the real spread.
    let left_est = with_se(left_est, left.value.se);
    let right_est = with_se(right_est, right.value.se);
    let (z, p_value, verdict) = decide(&left_est, &right_est, confidence);

    Ok(IdentityReport {
        identity: "stationarity".into(),
        functional: None,
        h: h.to_vec(),
        x: None,
        n,
        left: left.value,
        right: right.value,
        z,
        p_value,
        verdict,
        confidence,
        seed: master_seed,
        diagnostics: serde_json::json!({
            "thresholds": thresholds,
            "left": left.diag,
            "right": right.diag,
        }),
        spec: serde_json::json!({
            "kind": "stationarity",
            "sites": sites,
            "thresholds": thresholds,
            "h": h,
            "n": n,
        }),
    })
}

fn with_se(mut est: MCEstimate, se: f64) -> MCEstimate {
    if est.n >= 2 {
        est.m2 = se * se * est.n as f64 * (est.n - 1) as f64;
    }
    est
}

/// Empirical CDF sup-distance against the unit Frechet law
/// `exp(-x^(-alpha))`; the margin law of the max-stable field under a
/// unit-normalized representor.
pub fn frechet_margin_distance(samples: &mut [f64], alpha: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut dist: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = (-x.powf(-alpha)).exp();
        dist = dist.max((f - i as f64 / n).abs());
        dist = dist.max(((i + 1) as f64 / n - f).abs());
    }
    dist
}

/// Verdict of the `V` monotonicity invariant: `V` is nonincreasing in
/// each threshold coordinate.
pub fn exponent_monotone_in_thresholds(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use crate::gaussian::{GaussianSampler, Variogram};
    use crate::representor::Representor;
    use crate::stream::make_pool;
    use crate::verify::Verdict;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn br_line(theta: f64) -> Representor {
        Representor::brown_resnick(
            FieldConfig::scalar_line(1.0),
            GaussianSampler::new(Variogram::fractional(theta, 0.5).unwrap()),
        )
    }

    fn constant_rep() -> Representor {
        Representor::constant(FieldConfig::scalar_line(1.0), 1.0).unwrap()
    }

    #[test]
    fn constant_representor_gives_unit_frechet() {
        // Z = 1: X(t) = 1 / Gamma_1 at every site, so P(X <= x) = e^{-1/x}.
        let rep = constant_rep();
        let sites = PointSet::on_line(&[0.0, 1.0]);
        let prepared = rep.prepare(&sites).unwrap();
        let dcfg = DeHaanConfig::default();
        let n = 100_000;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = derive_stream(71, lane::SIMULATE, i as u64);
            let s = dehaan_sample(prepared.as_ref(), 1.0, &dcfg, 1.0, &mut rng).unwrap();
            // All sites share the value.
            assert_eq!(s.path.row(0)[0], s.path.row(1)[0]);
            assert!(s.path.row(0)[0] > 0.0);
            assert!(!s.warned);
            samples.push(s.path.row(0)[0]);
        }
        let dist = frechet_margin_distance(&mut samples, 1.0);
        assert!(dist < 0.01, "Frechet sup-distance {dist}");
    }

    #[test]
    fn br_margins_are_unit_frechet() {
        let rep = br_line(1.0);
        let sites = PointSet::on_line(&[0.0]);
        let prepared = rep.prepare(&sites).unwrap();
        let dcfg = DeHaanConfig::default();
        let sup = pilot_sup_bound(&rep, &sites, &dcfg, 2000, 72).unwrap();
        let n = 100_000;
        let mut samples = Vec::with_capacity(n);
        let mut warned = 0u64;
        for i in 0..n {
            let mut rng = derive_stream(73, lane::SIMULATE, i as u64);
            let s = dehaan_sample(prepared.as_ref(), 1.0, &dcfg, sup, &mut rng).unwrap();
            assert!(s.truncation.is_finite());
            warned += s.warned as u64;
            samples.push(s.path.row(0)[0]);
        }
        let dist = frechet_margin_distance(&mut samples, 1.0);
        assert!(dist < 0.01, "Frechet sup-distance {dist}");
        assert!(warned < n as u64 / 100, "{warned} truncation warnings");
    }

    #[test]
    fn max_stability_under_scaling() {
        // P(X <= c x)^c == P(X <= x) for alpha = 1: check via empirical
        // CDFs at one point.
        let rep = constant_rep();
        let prepared = rep.prepare(&PointSet::on_line(&[0.0])).unwrap();
        let dcfg = DeHaanConfig::default();
        let n = 100_000u64;
        let (mut at_x, mut at_cx) = (0u64, 0u64);
        let (x, c) = (1.0, 3.0);
        for i in 0..n {
            let mut rng = derive_stream(74, lane::SIMULATE, i);
            let v = dehaan_sample(prepared.as_ref(), 1.0, &dcfg, 1.0, &mut rng)
                .unwrap()
                .path
                .row(0)[0];
            at_x += (v <= x) as u64;
            at_cx += (v <= c * x) as u64;
        }
        let p_x = at_x as f64 / n as f64;
        let p_cx = at_cx as f64 / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        assert!((p_cx.powf(c) - p_x).abs() < 6.0 * se, "{} vs {}", p_cx.powf(c), p_x);
    }

    #[test]
    fn exponent_constant_field_is_exact() {
        let rep = constant_rep();
        let query = ExponentQuery::new(PointSet::on_line(&[0.0, 1.0]), vec![1.0, 1.0]).unwrap();
        let pool = make_pool(2);
        let est = exponent_estimate(&rep, &query, 5000, 75, lane::LEFT, &pool).unwrap();
        assert_eq!(est.value.mean, 1.0);
        assert_eq!(est.value.se, 0.0);
        assert!((est.fidi_cdf - (-1.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exponent_single_site_margin() {
        // V = x^{-alpha} E |Z(0)|^alpha = x^{-1} for the pinned field.
        let rep = br_line(1.0);
        let query = ExponentQuery::new(PointSet::on_line(&[0.0]), vec![2.0]).unwrap();
        let pool = make_pool(2);
        let est = exponent_estimate(&rep, &query, 5000, 76, lane::LEFT, &pool).unwrap();
        assert_eq!(est.value.mean, 0.5);
        assert_eq!(est.value.se, 0.0);
    }

    #[test]
    fn exponent_pair_matches_gaussian_oracle() {
        // Two-site exponent of the log-normal representor reduces to
        // E max(1, e^{G - v/2}) = 2 Phi(sqrt(v)/2).
        let rep = br_line(1.0);
        let query = ExponentQuery::new(PointSet::on_line(&[0.0, 1.0]), vec![1.0, 1.0]).unwrap();
        let pool = make_pool(4);
        let est = exponent_estimate(&rep, &query, 200_000, 77, lane::LEFT, &pool).unwrap();
        let oracle = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(0.5);
        assert!(
            (est.value.mean - oracle).abs() < 3.0 * est.value.se,
            "estimate {} vs oracle {oracle} (se {})",
            est.value.mean,
            est.value.se
        );
    }

    #[test]
    fn exponent_monotone_in_threshold_grid() {
        let rep = br_line(1.0);
        let pool = make_pool(2);
        let mut values = Vec::new();
        for x in [0.5, 1.0, 2.0] {
            let query =
                ExponentQuery::new(PointSet::on_line(&[0.0, 1.0]), vec![x, 1.0]).unwrap();
            let est = exponent_estimate(&rep, &query, 50_000, 78, lane::LEFT, &pool).unwrap();
            assert!(est.fidi_cdf > 0.0 && est.fidi_cdf <= 1.0);
            values.push(est.value.mean);
        }
        assert!(exponent_monotone_in_thresholds(&values), "{values:?}");
    }

    #[test]
    fn near_independence_at_large_lag() {
        // -log P(X(0) <= 1, X(h) <= 1) = 2 Phi(sqrt(v)/2) -> 2 as v grows;
        // at v = 25 the oracle is within 0.013 of 2. The plain summand
        // max(1, Z(h)) has second moment ~ e^v, hopeless for direct MC,
        // but max(1, Z) = Z + (1 - Z)^+ and E Z(h) = 1 is the margin
        // normalization, leaving a bounded residual to estimate.
        let rep = br_line(1.0);
        let sites = PointSet::on_line(&[25.0]);
        let prepared = rep.prepare(&sites).unwrap();
        let n = 200_000u64;
        let mut residual = MCEstimate::new();
        for i in 0..n {
            let mut rng = derive_stream(79, lane::LEFT, i);
            let z = prepared.draw(&mut rng).unwrap().path.row(0)[0];
            residual.push((1.0 - z).max(0.0));
        }
        let v = 1.0 + residual.mean;
        let err = (v - 2.0).abs();
        assert!(
            err + 3.0 * residual.se() < 0.05,
            "exponent {v} ({} +- {})",
            residual.mean,
            residual.se()
        );
    }

    #[test]
    fn far_lag_series_reports_truncation() {
        // The Poisson series cannot resolve a v = 25 site within any
        // desk-scale term cap; the diagnostic has to say so.
        let rep = br_line(1.0);
        let sites = PointSet::on_line(&[0.0, 25.0]);
        let prepared = rep.prepare(&sites).unwrap();
        let dcfg = DeHaanConfig::default();
        let sup = pilot_sup_bound(&rep, &sites, &dcfg, 2000, 82).unwrap();
        let mut warned = 0u64;
        for i in 0..200 {
            let mut rng = derive_stream(83, lane::SIMULATE, i);
            let s = dehaan_sample(prepared.as_ref(), 1.0, &dcfg, sup, &mut rng).unwrap();
            warned += s.warned as u64;
        }
        assert!(warned > 100, "only {warned}/200 draws carried a truncation warning");
    }

    #[test]
    fn stationarity_same_rep_zero_shift_passes() {
        let rep = br_line(1.0);
        let pool = make_pool(2);
        let report = stationarity_check(
            &rep,
            &rep,
            &PointSet::on_line(&[0.0, 1.0]),
            &[0.0],
            &[1.0, 1.0],
            20_000,
            0.99,
            80,
            &pool,
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "{report:?}");
    }

    #[test]
    fn stationarity_detects_scale_mismatch() {
        // Distinct variogram scales give distinct exponent functionals
        // (2 Phi(0.5) vs 2 Phi(1)); zero shift keeps both summands cheap.
        let pool = make_pool(2);
        let report = stationarity_check(
            &br_line(1.0),
            &br_line(4.0),
            &PointSet::on_line(&[0.0, 1.0]),
            &[0.0],
            &[1.0, 1.0],
            100_000,
            0.99,
            81,
            &pool,
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!(report.z.abs() > 5.0, "z = {}", report.z);
    }
}
