//! Measure tilting to the local field, the Pareto tail multiplier, and
//! the shift-randomized constructions built from one joint realization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{norm_unchecked, FieldConfig, PathSample, PointSet, SiteBinder};
use crate::functional::{snap_to_lattice, QuadratureRule, ShiftDensity};
use crate::representor::Representor;
use crate::sample::{Draw, PathSource, PreparedSource};
use crate::stream::{estimate_mean, lane, Stream};

/// How the tilted law is realized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TiltMode {
    /// Valid only when the base has unit origin norm on every draw; the
    /// tilt is then the identity.
    Exact,
    /// Sampling-importance-resampling over a pool of base draws.
    Sir { pool_size: usize },
    /// Emit `(path / |path(0)|, weight = |path(0)|^alpha)` pairs.
    #[default]
    Weighted,
}

pub const DEFAULT_SIR_POOL: usize = 64;

/// The local field: the base representor under the measure tilted by
/// `|Z(0)|^alpha`, normalized so the origin value has norm one.
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    pub base: Representor,
    pub mode: TiltMode,
}

impl TiltedSampler {
    pub fn new(base: Representor, mode: TiltMode) -> Result<Self> {
        if let TiltMode::Sir { pool_size } = mode {
            if pool_size == 0 {
                return Err(Error::Config("sir pool size must be at least 1".into()));
            }
        }
        if mode == TiltMode::Exact && !base.unit_origin_norm() {
            return Err(Error::Config(format!(
                "exact tilt mode requires |Z(0)| = 1 deterministically; `{}` does not guarantee it",
                base.label()
            )));
        }
        Ok(Self { base, mode })
    }
}

impl PathSource for TiltedSampler {
    fn cfg(&self) -> &FieldConfig {
        self.base.cfg()
    }

    fn label(&self) -> String {
        format!("theta({})", self.base.label())
    }

    fn unit_origin_norm(&self) -> bool {
        true
    }

    fn prepare(&self, sites: &PointSet) -> Result<Box<dyn PreparedSource>> {
        let cfg = self.cfg().clone();
        let mut binder = SiteBinder::new(cfg.dim_l);
        let origin = binder.add(&vec![0.0; cfg.dim_l]);
        let proj = binder.add_set(sites);
        let joint = binder.into_sites();
        let prepared = self.base.prepare(&joint)?;
        Ok(Box::new(PreparedTilt {
            prepared,
            origin,
            proj,
            sites: sites.clone(),
            cfg,
            mode: self.mode,
            base_label: self.base.label(),
        }))
    }
}

struct PreparedTilt {
    prepared: Box<dyn PreparedSource>,
    origin: usize,
    proj: Vec<usize>,
    sites: PointSet,
    cfg: FieldConfig,
    mode: TiltMode,
    base_label: String,
}

impl PreparedTilt {
    fn normalize(&self, base: Draw) -> Result<Draw> {
        let origin_norm = norm_unchecked(base.path.row(self.origin), self.cfg.norm);
        let mut diag = base.diag;
        match self.mode {
            TiltMode::Exact => {
                let path = base.path.project(&self.proj, self.sites.clone())?;
                Ok(Draw { path, weight: base.weight, diag })
            }
            TiltMode::Weighted => {
                if origin_norm == 0.0 {
                    diag.zero_weight += 1;
                    let path = PathSample::new(
                        self.sites.clone(),
                        self.cfg.dim_d,
                        vec![0.0; self.sites.len() * self.cfg.dim_d],
                    )?;
                    return Ok(Draw { path, weight: 0.0, diag });
                }
                let weight = base.weight * origin_norm.powf(self.cfg.alpha);
                let path = base
                    .path
                    .scaled(1.0 / origin_norm)
                    .project(&self.proj, self.sites.clone())?;
                Ok(Draw { path, weight, diag })
            }
            TiltMode::Sir { .. } => unreachable!("sir handled in draw"),
        }
    }
}

impl PreparedSource for PreparedTilt {
    fn draw(&self, rng: &mut Stream) -> Result<Draw> {
        if let TiltMode::Sir { pool_size } = self.mode {
            let mut pool = Vec::with_capacity(pool_size);
            let mut weights = Vec::with_capacity(pool_size);
            for _ in 0..pool_size {
                let d = self.prepared.draw(rng)?;
                let w = d.weight * norm_unchecked(d.path.row(self.origin), self.cfg.norm).powf(self.cfg.alpha);
                weights.push(w);
                pool.push(d);
            }
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::DegenerateTilting(self.base_label.clone()));
            }
            let u: f64 = rand::Rng::random::<f64>(rng) * total;
            let mut acc = 0.0;
            let mut chosen = pool_size - 1;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            let picked = pool.swap_remove(chosen);
            let origin_norm = norm_unchecked(picked.path.row(self.origin), self.cfg.norm);
            let path = picked
                .path
                .scaled(1.0 / origin_norm)
                .project(&self.proj, self.sites.clone())?;
            return Ok(Draw { path, weight: 1.0, diag: picked.diag });
        }
        let base = self.prepared.draw(rng)?;
        self.normalize(base)
    }
}

/// One draw of the local field at `sites` (which must include the
/// origin), plus its importance weight.
pub fn sample_theta(
    sites: &PointSet,
    tilt: &TiltedSampler,
    rng: &mut Stream,
) -> Result<(PathSample, f64)> {
    let origin = vec![0.0; tilt.cfg().dim_l];
    if sites.position_of(&origin).is_none() {
        return Err(Error::Contract("sample_theta: sites must include the origin".into()));
    }
    let draw = tilt.prepare(sites)?.draw(rng)?;
    Ok((draw.path, draw.weight))
}

/// `R = U^(-1/alpha)` for uniform `U` on (0, 1]: survival
/// `P(R > s) = s^(-alpha)` for `s >= 1`.
#[derive(Debug, Clone, Copy)]
pub struct ParetoMultiplier {
    pub alpha: f64,
}

impl ParetoMultiplier {
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let u: f64 = rand::Rng::random(rng);
        (1.0 - u).powf(-1.0 / self.alpha)
    }
}

/// The tail field `Y = R * Theta` with `R` independent of the local
/// field.
#[derive(Debug, Clone)]
pub struct TailSampler {
    pub tilt: TiltedSampler,
}

impl PathSource for TailSampler {
    fn cfg(&self) -> &FieldConfig {
        self.tilt.cfg()
    }

    fn label(&self) -> String {
        format!("tail({})", self.tilt.base.label())
    }

    fn prepare(&self, sites: &PointSet) -> Result<Box<dyn PreparedSource>> {
        let inner = self.tilt.prepare(sites)?;
        Ok(Box::new(PreparedTail { inner, pareto: ParetoMultiplier { alpha: self.cfg().alpha } }))
    }
}

struct PreparedTail {
    inner: Box<dyn PreparedSource>,
    pareto: ParetoMultiplier,
}

impl PreparedSource for PreparedTail {
    fn draw(&self, rng: &mut Stream) -> Result<Draw> {
        // Theta first, then R; the order is part of the reproducibility
        // contract.
        let theta = self.inner.draw(rng)?;
        let r = self.pareto.sample(rng);
        Ok(Draw { path: theta.path.scaled(r), weight: theta.weight, diag: theta.diag })
    }
}

/// One draw of the tail field at `sites` (origin required).
pub fn sample_tail_y(
    sites: &PointSet,
    tail: &TailSampler,
    rng: &mut Stream,
) -> Result<(PathSample, f64)> {
    let origin = vec![0.0; tail.cfg().dim_l];
    if sites.position_of(&origin).is_none() {
        return Err(Error::Contract("sample_tail_y: sites must include the origin".into()));
    }
    let draw = tail.prepare(sites)?.draw(rng)?;
    Ok((draw.path, draw.weight))
}

/// The shift-randomized constructions. Names appear verbatim in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformVariant {
    /// `|Z(0)| / (gamma(N) S(Z))^(1/alpha) * B^N Z`; finite-S regime.
    #[serde(rename = "zn")]
    Zn,
    /// `1 / (gamma(N) S(Theta))^(1/alpha) * B^N Theta`; finite-S regime.
    #[serde(rename = "zn_prime_finiteS")]
    ZnPrimeFiniteS,
    /// `|Z(0)| / S_gamma(B^N Z)^(1/alpha) * B^N Z`.
    #[serde(rename = "zn_boll3")]
    ZnBoll3,
    /// `1 / S_gamma(B^N Theta)^(1/alpha) * B^N Theta`.
    #[serde(rename = "zn_prime_boll3b")]
    ZnPrimeBoll3b,
    /// `B^N Theta / (integral gamma 1{|B^N Theta| > 0})^(1/alpha)`.
    #[serde(rename = "zn_second")]
    ZnSecond,
    /// `gamma(N)^(-1/alpha) * B^N Q` for a cluster profile `Q`.
    #[serde(rename = "cluster")]
    Cluster,
}

impl TransformVariant {
    /// Whether the construction starts from the local field.
    pub fn uses_theta(&self) -> bool {
        matches!(
            self,
            TransformVariant::ZnPrimeFiniteS
                | TransformVariant::ZnPrimeBoll3b
                | TransformVariant::ZnSecond
        )
    }

    /// Whether the finite-S pre-run diagnostic gates this variant.
    pub fn requires_finite_s(&self) -> bool {
        matches!(self, TransformVariant::Zn | TransformVariant::ZnPrimeFiniteS)
    }

    /// Whether `|base(0)| > 0` is checked on every draw.
    pub fn requires_positive_origin(&self) -> bool {
        matches!(self, TransformVariant::Zn | TransformVariant::ZnBoll3)
    }
}

/// Base field a transform shifts: a raw representor or a local field.
#[derive(Debug, Clone)]
pub enum TransformBase {
    Plain(Representor),
    Tilted(TiltedSampler),
}

impl TransformBase {
    fn as_source(&self) -> &dyn PathSource {
        match self {
            TransformBase::Plain(r) => r,
            TransformBase::Tilted(t) => t,
        }
    }
}

/// Result of the finite-S pre-run diagnostic: the integral on the window
/// compared against the integral on the doubled window, per pilot path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteSDiag {
    pub pilot_n: u64,
    pub median_tail_ratio: f64,
    pub ok: bool,
}

/// A shift-randomized representor. Every draw evaluates one base
/// realization jointly at the origin, the quadrature nodes (shifted for
/// the `S_gamma(B^N .)` variants) and the shifted output sites, so the
/// normalizing integral and the output come from the same realization.
#[derive(Debug, Clone)]
pub struct TransformedField {
    pub variant: TransformVariant,
    pub base: TransformBase,
    pub density: ShiftDensity,
    pub rule: QuadratureRule,
}

impl TransformedField {
    pub fn new(
        variant: TransformVariant,
        base: TransformBase,
        density: ShiftDensity,
        rule: QuadratureRule,
    ) -> Result<Self> {
        density.validate()?;
        match (variant, &base) {
            (TransformVariant::Cluster, TransformBase::Plain(Representor::ClusterProfile { .. })) => {}
            (TransformVariant::Cluster, b) => {
                return Err(Error::Config(format!(
                    "cluster transform requires a cluster_profile base, got `{}`",
                    b.as_source().label()
                )));
            }
            (v, TransformBase::Plain(_)) if v.uses_theta() => {
                return Err(Error::Config(format!(
                    "variant {v:?} is built from the local field; tilt the base first"
                )));
            }
            (v, TransformBase::Tilted(_)) if !v.uses_theta() && v != TransformVariant::Cluster => {
                return Err(Error::Config(format!(
                    "variant {v:?} acts on a raw representor, not a tilted one"
                )));
            }
            _ => {}
        }
        if rule.dim_l != base.as_source().cfg().dim_l {
            return Err(Error::Config("quadrature rule dimension mismatch".into()));
        }
        Ok(Self { variant, base, density, rule })
    }

    /// Pilot check that the window captures the field's alpha-mass:
    /// the median of `S(doubled window) / S(window)` over pilot paths
    /// must not exceed 1.01. Medians rather than means: path integrals
    /// of log-normal fields are a.s. finite with heavy upper tails.
    pub fn finite_s_preflight(
        &self,
        pilot_n: u64,
        master_seed: u64,
        pool: &rayon::ThreadPool,
    ) -> Result<FiniteSDiag> {
        let cfg = self.base.as_source().cfg().clone();
        let wide = self.rule.extended_double();
        let narrow_nodes = self.rule.nodes();
        let wide_nodes = wide.nodes();
        let mut binder = SiteBinder::new(cfg.dim_l);
        let narrow_idx = binder.add_set(&narrow_nodes);
        let wide_idx = binder.add_set(&wide_nodes);
        let joint = binder.into_sites();
        let prepared = self.base.as_source().prepare(&joint)?;

        let ratios = crate::stream::collect_values(pool, master_seed, lane::PILOT, pilot_n, |_, rng| {
            let draw = prepared.draw(rng)?;
            let norms = draw.path.norms(cfg.norm);
            let s_narrow: f64 = narrow_idx.iter().map(|&i| norms[i].powf(cfg.alpha)).sum();
            let s_wide: f64 = wide_idx.iter().map(|&i| norms[i].powf(cfg.alpha)).sum();
            if s_narrow <= 0.0 {
                return Err(Error::PositivityViolation(format!(
                    "pilot path has zero alpha-mass on the window for `{}`",
                    self.base.as_source().label()
                )));
            }
            Ok(s_wide / s_narrow)
        })?;
        let mut sorted = ratios;
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        Ok(FiniteSDiag { pilot_n, median_tail_ratio: median, ok: median - 1.0 < 0.01 })
    }
}

impl PathSource for TransformedField {
    fn cfg(&self) -> &FieldConfig {
        self.base.as_source().cfg()
    }

    fn label(&self) -> String {
        format!("{:?}({})", self.variant, self.base.as_source().label())
    }

    fn prepare(&self, sites: &PointSet) -> Result<Box<dyn PreparedSource>> {
        Ok(Box::new(PreparedTransform {
            transform: self.clone(),
            targets: sites.clone(),
            nodes: self.rule.nodes(),
            cfg: self.cfg().clone(),
            plans: std::sync::RwLock::new(std::collections::HashMap::new()),
        }))
    }

    fn preflight(&self, master_seed: u64, pool: &rayon::ThreadPool) -> Result<Option<serde_json::Value>> {
        if !self.variant.requires_finite_s() {
            return Ok(None);
        }
        let diag = self.finite_s_preflight(256, master_seed, pool)?;
        if !diag.ok {
            return Err(Error::Config(format!(
                "finite-S diagnostic failed for {}: median S(2m)/S(m) = {:.4} exceeds 1.01; \
                 widen the window",
                self.label(),
                diag.median_tail_ratio
            )));
        }
        Ok(Some(serde_json::to_value(&diag).expect("diag serializes")))
    }
}

struct TransformPlan {
    prepared: Box<dyn PreparedSource>,
    origin_idx: usize,
    node_idx: Vec<usize>,
    target_idx: Vec<usize>,
}

struct PreparedTransform {
    transform: TransformedField,
    targets: PointSet,
    nodes: PointSet,
    cfg: FieldConfig,
    /// Joint site sets (and the base factorization behind them) depend
    /// only on the snapped shift, which lives on a small lattice; reuse
    /// them across draws.
    plans: std::sync::RwLock<std::collections::HashMap<Vec<i64>, std::sync::Arc<TransformPlan>>>,
}

const PLAN_CACHE_CAP: usize = 4096;

impl PreparedTransform {
    fn build_plan(&self, shift: &[f64]) -> Result<TransformPlan> {
        let t = &self.transform;
        let cfg = &self.cfg;
        // Joint site set: origin, quadrature nodes (shifted by N for the
        // shifted-integral variants), and the output sites shifted by N.
        let mut binder = SiteBinder::new(cfg.dim_l);
        let origin_idx = binder.add(&vec![0.0; cfg.dim_l]);
        let shift_node =
            |p: &[f64]| -> Vec<f64> { p.iter().zip(shift).map(|(a, b)| a - b).collect() };
        let nodes_shifted = matches!(
            t.variant,
            TransformVariant::ZnBoll3 | TransformVariant::ZnPrimeBoll3b | TransformVariant::ZnSecond
        );
        let node_idx: Vec<usize> = if t.variant == TransformVariant::Cluster {
            Vec::new()
        } else if nodes_shifted {
            self.nodes.iter().map(|p| binder.add(&shift_node(p))).collect()
        } else {
            binder.add_set(&self.nodes)
        };
        let target_idx: Vec<usize> =
            self.targets.iter().map(|p| binder.add(&shift_node(p))).collect();
        let joint = binder.into_sites();
        let prepared = t.base.as_source().prepare(&joint)?;
        Ok(TransformPlan { prepared, origin_idx, node_idx, target_idx })
    }

    fn plan_for(&self, shift: &[f64], step: f64) -> Result<std::sync::Arc<TransformPlan>> {
        let key: Vec<i64> = shift.iter().map(|&c| (c / step).round() as i64).collect();
        if let Some(plan) = self.plans.read().expect("plan cache").get(&key) {
            return Ok(plan.clone());
        }
        let plan = std::sync::Arc::new(self.build_plan(shift)?);
        let mut cache = self.plans.write().expect("plan cache");
        if cache.len() < PLAN_CACHE_CAP {
            cache.insert(key, plan.clone());
        }
        Ok(plan)
    }
}

impl PreparedSource for PreparedTransform {
    fn draw(&self, rng: &mut Stream) -> Result<Draw> {
        let t = &self.transform;
        let cfg = &self.cfg;
        let step = t.rule.step;
        let weight_per_node = t.rule.weight();

        let raw_shift = t.density.sample(cfg.dim_l, rng);
        let (shift, snap_error) = snap_to_lattice(&raw_shift, step);
        let gamma_at_shift = match t.density {
            // The uniform density is constant on its support; evaluate at
            // the raw draw so boundary rounding cannot land outside.
            ShiftDensity::UniformWindow { .. } => t.density.pdf(&raw_shift),
            _ => t.density.pdf(&shift),
        };

        let plan = self.plan_for(&shift, step)?;
        let origin_idx = plan.origin_idx;
        let node_idx = &plan.node_idx;
        let target_idx = &plan.target_idx;

        let base_draw = plan.prepared.draw(rng)?;
        let norms = base_draw.path.norms(cfg.norm);

        if t.variant.requires_positive_origin() && !(norms[origin_idx] > 0.0) {
            return Err(Error::Contract(format!(
                "{}: base field vanished at the origin on a draw",
                t.label()
            )));
        }

        let coefficient = match t.variant {
            TransformVariant::Zn | TransformVariant::ZnBoll3 => norms[origin_idx],
            _ => 1.0,
        };
        let denominator = match t.variant {
            TransformVariant::Zn | TransformVariant::ZnPrimeFiniteS => {
                let s: f64 =
                    node_idx.iter().map(|&i| weight_per_node * norms[i].powf(cfg.alpha)).sum();
                gamma_at_shift * s
            }
            TransformVariant::ZnBoll3 | TransformVariant::ZnPrimeBoll3b => node_idx
                .iter()
                .zip(self.nodes.iter())
                .map(|(&i, node)| {
                    weight_per_node * t.density.pdf(node) * norms[i].powf(cfg.alpha)
                })
                .sum(),
            TransformVariant::ZnSecond => node_idx
                .iter()
                .zip(self.nodes.iter())
                .map(|(&i, node)| {
                    if norms[i] > 0.0 {
                        weight_per_node * t.density.pdf(node)
                    } else {
                        0.0
                    }
                })
                .sum(),
            TransformVariant::Cluster => gamma_at_shift,
        };
        if !(denominator > 0.0) {
            return Err(Error::PositivityViolation(format!(
                "{}: normalizing integral evaluated to {denominator}",
                t.label()
            )));
        }

        let scale = coefficient / denominator.powf(1.0 / cfg.alpha);
        let mut values = Vec::with_capacity(self.targets.len() * cfg.dim_d);
        for &i in target_idx {
            values.extend(base_draw.path.row(i).iter().map(|&v| scale * v));
        }
        let path = PathSample::new(self.targets.clone(), cfg.dim_d, values)?;
        let mut diag = base_draw.diag;
        diag.snap_error = diag.snap_error.max(snap_error);
        Ok(Draw { path, weight: base_draw.weight, diag })
    }
}

/// Estimate `E |source(h)|^alpha` by plain weighted Monte Carlo; used by
/// the local-field moment checks.
pub fn origin_shifted_moment(
    source: &dyn PathSource,
    h: &[f64],
    n: u64,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<crate::estimate::MCEstimate> {
    let cfg = source.cfg().clone();
    let sites = PointSet::new(cfg.dim_l, vec![h.to_vec()])?;
    let prepared = source.prepare(&sites)?;
    let est = estimate_mean(pool, master_seed, lane::PILOT, n, |_, rng| {
        let draw = prepared.draw(rng)?;
        let v = norm_unchecked(draw.path.row(0), cfg.norm).powf(cfg.alpha);
        Ok((draw.weight * v, draw.diag))
    })?;
    Ok(est.est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{NormKind, Window};
    use crate::gaussian::{GaussianSampler, Variogram};
    use crate::representor::ProfileKind;
    use crate::stream::{derive_stream, make_pool};

    fn br_line(theta: f64) -> Representor {
        Representor::brown_resnick(
            FieldConfig::scalar_line(1.0),
            GaussianSampler::new(Variogram::fractional(theta, 0.5).unwrap()),
        )
    }

    fn line_rule(m: f64, step: f64) -> QuadratureRule {
        QuadratureRule::new(Window::new(m).unwrap(), step, 1).unwrap()
    }

    #[test]
    fn pareto_support_and_survival() {
        let pareto = ParetoMultiplier { alpha: 1.0 };
        let n = 100_000;
        let mut rng = derive_stream(41, 0, 0);
        let mut counts = [0u64; 3];
        let levels = [1.5, 2.0, 4.0];
        for _ in 0..n {
            let r = pareto.sample(&mut rng);
            assert!(r >= 1.0);
            for (k, &s) in levels.iter().enumerate() {
                if r > s {
                    counts[k] += 1;
                }
            }
        }
        for (k, &s) in levels.iter().enumerate() {
            let p_hat = counts[k] as f64 / n as f64;
            let p = s.powf(-1.0);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((p_hat - p).abs() < 4.0 * se, "survival at {s}: {p_hat} vs {p}");
        }
    }

    #[test]
    fn exact_tilt_is_identity_for_pinned_base() {
        let rep = br_line(1.0);
        let tilt = TiltedSampler::new(rep.clone(), TiltMode::Exact).unwrap();
        let sites = PointSet::on_line(&[0.0, 1.0]);
        let a = tilt.prepare(&sites).unwrap().draw(&mut derive_stream(5, 2, 7)).unwrap();
        let b = rep.prepare(&sites).unwrap().draw(&mut derive_stream(5, 2, 7)).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.weight, 1.0);
        assert_eq!(a.path.row(0)[0], 1.0);
    }

    #[test]
    fn exact_tilt_rejected_for_non_unit_base() {
        let cfg = FieldConfig::scalar_line(1.0);
        let q = Representor::new_cluster(cfg, ProfileKind::GaussianPdf { sigma: 1.0 }).unwrap();
        assert!(TiltedSampler::new(q, TiltMode::Exact).is_err());
    }

    #[test]
    fn theta_origin_norm_is_one_in_every_mode() {
        let rep = br_line(1.0);
        let origin_sites = PointSet::on_line(&[0.0, 0.5]);
        for mode in [TiltMode::Exact, TiltMode::Weighted, TiltMode::Sir { pool_size: 8 }] {
            let tilt = TiltedSampler::new(rep.clone(), mode).unwrap();
            let prepared = tilt.prepare(&origin_sites).unwrap();
            for i in 0..50 {
                let mut rng = derive_stream(6, 1, i);
                let draw = prepared.draw(&mut rng).unwrap();
                if draw.weight > 0.0 {
                    assert_eq!(
                        norm_unchecked(draw.path.row(0), NormKind::Sup),
                        1.0,
                        "{mode:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn weighted_tilt_carries_origin_weight() {
        // A constant field of value 2 has tilting weight 2^alpha and a
        // normalized path of ones.
        let cfg = FieldConfig::scalar_line(1.0);
        let rep = Representor::constant(cfg, 2.0).unwrap();
        let tilt = TiltedSampler::new(rep, TiltMode::Weighted).unwrap();
        let (path, w) = sample_theta(
            &PointSet::on_line(&[0.0, 3.0]),
            &tilt,
            &mut derive_stream(7, 0, 0),
        )
        .unwrap();
        assert_eq!(w, 2.0);
        assert_eq!(path.row(1)[0], 1.0);
    }

    #[test]
    fn sir_with_all_zero_weights_is_degenerate() {
        let cfg = FieldConfig::scalar_line(1.0);
        let rep = Representor::constant(cfg, 0.0).unwrap();
        let tilt = TiltedSampler::new(rep, TiltMode::Sir { pool_size: 4 }).unwrap();
        let err = tilt
            .prepare(&PointSet::on_line(&[0.0]))
            .unwrap()
            .draw(&mut derive_stream(8, 0, 0))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateTilting(_)), "{err}");
    }

    #[test]
    fn sample_theta_requires_origin() {
        let tilt = TiltedSampler::new(br_line(1.0), TiltMode::Exact).unwrap();
        let err =
            sample_theta(&PointSet::on_line(&[1.0]), &tilt, &mut derive_stream(9, 0, 0)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn shifted_moment_is_at_most_one() {
        // E |Theta(h)|^alpha = P(|Theta(-h)| != 0) <= 1; equality for the
        // log-normal field.
        let tilt = TiltedSampler::new(br_line(1.0), TiltMode::Exact).unwrap();
        let pool = make_pool(2);
        for h in [0.5, 2.0] {
            let est = origin_shifted_moment(&tilt, &[h], 20_000, 51, &pool).unwrap();
            assert!(est.mean <= 1.0 + 4.0 * est.se(), "h = {h}: {} (se {})", est.mean, est.se());
            assert!((est.mean - 1.0).abs() <= 4.0 * est.se());
        }
    }

    #[test]
    fn tail_field_support_and_survival() {
        let tilt = TiltedSampler::new(br_line(1.0), TiltMode::Exact).unwrap();
        let tail = TailSampler { tilt };
        let sites = PointSet::on_line(&[0.0]);
        let prepared = tail.prepare(&sites).unwrap();
        let n = 100_000u64;
        let mut above_two = 0u64;
        for i in 0..n {
            let mut rng = derive_stream(52, 0, i);
            let y0 = prepared.draw(&mut rng).unwrap().path.row(0)[0];
            assert!(y0 >= 1.0);
            if y0 > 2.0 {
                above_two += 1;
            }
        }
        let p_hat = above_two as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p_hat - 0.5).abs() < 4.0 * se, "P(Y(0) > 2) = {p_hat}");
    }

    #[test]
    fn tail_origin_equals_r_for_pinned_theta() {
        // With Theta(0) = 1 exactly, Y(0) is the Pareto multiplier.
        let tilt = TiltedSampler::new(br_line(1.0), TiltMode::Exact).unwrap();
        let tail = TailSampler { tilt };
        let (path, _) = sample_tail_y(
            &PointSet::on_line(&[0.0, 1.0]),
            &tail,
            &mut derive_stream(53, 0, 0),
        )
        .unwrap();
        assert!(path.row(0)[0] >= 1.0);
    }

    #[test]
    fn zn_second_denominator_is_one_for_positive_fields() {
        // A strictly positive local field makes the indicator integral
        // the full gamma mass, which the lattice sum reproduces to
        // near machine precision, so the output is B^N Theta itself.
        let tilt = TiltedSampler::new(br_line(4.0), TiltMode::Exact).unwrap();
        let rule = line_rule(8.125, 0.25);
        let density = ShiftDensity::gaussian(1.0).unwrap();
        let zn2 = TransformedField::new(
            TransformVariant::ZnSecond,
            TransformBase::Tilted(tilt.clone()),
            density,
            rule.clone(),
        )
        .unwrap();
        let sites = PointSet::on_line(&[0.0, 1.0]);
        let prepared = zn2.prepare(&sites).unwrap();
        let mut rng = derive_stream(54, 0, 0);
        let draw = prepared.draw(&mut rng).unwrap();
        assert!(draw.path.row(0)[0] > 0.0);

        // Reproduce the draw by hand: same stream, same shift, same base.
        let mut rng2 = derive_stream(54, 0, 0);
        let raw = density.sample(1, &mut rng2);
        let (shift, _) = snap_to_lattice(&raw, 0.25);
        let mut binder = SiteBinder::new(1);
        binder.add(&[0.0]);
        let nodes = rule.nodes();
        let node_idx: Vec<usize> =
            nodes.iter().map(|p| binder.add(&[p[0] - shift[0]])).collect();
        let i0 = binder.add(&[0.0 - shift[0]]);
        let i1 = binder.add(&[1.0 - shift[0]]);
        let joint = binder.into_sites();
        let base = tilt.prepare(&joint).unwrap().draw(&mut rng2).unwrap();
        let denom: f64 = node_idx
            .iter()
            .zip(nodes.iter())
            .map(|(&i, node)| {
                if base.path.row(i)[0] > 0.0 {
                    0.25 * density.pdf(node)
                } else {
                    0.0
                }
            })
            .sum();
        // Log-normal paths are strictly positive, so the denominator is
        // the full lattice gamma mass.
        assert!((denom - 1.0).abs() < 1e-12, "lattice gamma mass {denom}");
        let expect0 = base.path.row(i0)[0] / denom;
        let expect1 = base.path.row(i1)[0] / denom;
        assert!((draw.path.row(0)[0] - expect0).abs() <= 1e-12 * expect0.abs());
        assert!((draw.path.row(1)[0] - expect1).abs() <= 1e-12 * expect1.abs());
    }

    #[test]
    fn cluster_transform_margin_is_one() {
        // E |Z_N(0)| = integral of Q: exactly one for a pdf profile.
        let cfg = FieldConfig::scalar_line(1.0);
        let q = Representor::new_cluster(cfg, ProfileKind::GaussianPdf { sigma: 1.0 }).unwrap();
        let transform = TransformedField::new(
            TransformVariant::Cluster,
            TransformBase::Plain(q),
            ShiftDensity::gaussian(2.0).unwrap(),
            line_rule(8.125, 0.25),
        )
        .unwrap();
        let pool = make_pool(2);
        let est = origin_shifted_moment(&transform, &[0.0], 20_000, 55, &pool).unwrap();
        assert!(
            (est.mean - 1.0).abs() < 4.0 * est.se(),
            "cluster margin {} (se {})",
            est.mean,
            est.se()
        );
    }

    #[test]
    fn variant_base_compatibility_is_enforced() {
        let rep = br_line(1.0);
        let tilt = TiltedSampler::new(rep.clone(), TiltMode::Exact).unwrap();
        let rule = line_rule(2.0, 0.25);
        let density = ShiftDensity::gaussian(1.0).unwrap();
        assert!(TransformedField::new(
            TransformVariant::ZnPrimeFiniteS,
            TransformBase::Plain(rep.clone()),
            density,
            rule.clone(),
        )
        .is_err());
        assert!(TransformedField::new(
            TransformVariant::Zn,
            TransformBase::Tilted(tilt.clone()),
            density,
            rule.clone(),
        )
        .is_err());
        assert!(TransformedField::new(
            TransformVariant::Cluster,
            TransformBase::Tilted(tilt),
            density,
            rule,
        )
        .is_err());
    }

    #[test]
    fn finite_s_preflight_passes_on_wide_window() {
        let tilt = TiltedSampler::new(br_line(4.0), TiltMode::Exact).unwrap();
        let transform = TransformedField::new(
            TransformVariant::ZnPrimeFiniteS,
            TransformBase::Tilted(tilt),
            ShiftDensity::gaussian(1.0).unwrap(),
            line_rule(8.125, 0.25),
        )
        .unwrap();
        let pool = make_pool(2);
        let diag = transform.finite_s_preflight(128, 61, &pool).unwrap();
        assert!(diag.ok, "median tail ratio {}", diag.median_tail_ratio);
    }

    #[test]
    fn scale_of_base_cancels_in_tilting() {
        // Tilting a scaled profile yields the identical local field.
        let cfg = FieldConfig::scalar_line(1.0);
        let q = Representor::new_cluster(cfg.clone(), ProfileKind::GaussianPdf { sigma: 1.0 })
            .unwrap();
        let scaled = match &q {
            Representor::ClusterProfile { profile, .. } => Representor::cluster_unchecked(
                cfg,
                crate::representor::Profile::with_scale(profile.kind, profile.scale * 3.0).unwrap(),
            ),
            _ => unreachable!(),
        };
        let sites = PointSet::on_line(&[0.0, 0.5, 1.0]);
        let a = TiltedSampler::new(q, TiltMode::Weighted)
            .unwrap()
            .prepare(&sites)
            .unwrap()
            .draw(&mut derive_stream(62, 0, 0))
            .unwrap();
        let b = TiltedSampler::new(scaled, TiltMode::Weighted)
            .unwrap()
            .prepare(&sites)
            .unwrap()
            .draw(&mut derive_stream(62, 0, 0))
            .unwrap();
        assert_eq!(a.path, b.path);
        // Weights scale by 3^alpha but the normalized path is shared.
        assert!((b.weight / a.weight - 3.0).abs() < 1e-12);
    }
}
