//! The representor catalog: log-normal (Brown-Resnick) fields driven by a
//! pinned Gaussian field, deterministic cluster profiles, constants, and
//! the signed-split adapter that turns a signed scalar field into a
//! nonnegative pair field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::MeanSe;
use crate::field::{
    norm_unchecked, FieldConfig, PathSample, Point, PointSet, SiteBinder, Window,
};
use crate::functional::QuadratureRule;
use crate::gaussian::{GaussianSampler, PreparedGaussian};
use crate::sample::{Draw, PathSource, PreparedSource};
use crate::stream::{lane, DrawDiag, Stream};

/// Deterministic profile shapes, tensorized over coordinates. `scale`
/// multiplies the base shape; `normalized` computes the scale that makes
/// the alpha-integral equal one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    GaussianPdf { sigma: f64 },
    Triangle { width: f64 },
    IndicatorBox { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub kind: ProfileKind,
    pub scale: f64,
}

impl ProfileKind {
    fn validate(&self) -> Result<()> {
        let positive = match *self {
            ProfileKind::GaussianPdf { sigma } => sigma > 0.0 && sigma.is_finite(),
            ProfileKind::Triangle { width } | ProfileKind::IndicatorBox { width } => {
                width > 0.0 && width.is_finite()
            }
        };
        if positive {
            Ok(())
        } else {
            Err(Error::Config(format!("profile parameter must be positive: {self:?}")))
        }
    }

    /// Base shape at one coordinate.
    fn axis_value(&self, x: f64) -> f64 {
        match *self {
            ProfileKind::GaussianPdf { sigma } => {
                (-x * x / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            ProfileKind::Triangle { width } => (1.0 - x.abs() / width).max(0.0),
            ProfileKind::IndicatorBox { width } => {
                if x.abs() <= width / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed form of `integral over R of axis_value(x)^alpha dx`.
    fn axis_alpha_integral(&self, alpha: f64) -> f64 {
        match *self {
            ProfileKind::GaussianPdf { sigma } => {
                (2.0 * std::f64::consts::PI * sigma * sigma).powf((1.0 - alpha) / 2.0)
                    / alpha.sqrt()
            }
            ProfileKind::Triangle { width } => 2.0 * width / (alpha + 1.0),
            ProfileKind::IndicatorBox { width } => width,
        }
    }

    /// Half-width beyond which the shape is zero or negligible.
    fn support_half_width(&self) -> f64 {
        match *self {
            ProfileKind::GaussianPdf { sigma } => 10.0 * sigma,
            ProfileKind::Triangle { width } => width,
            ProfileKind::IndicatorBox { width } => width,
        }
    }
}

impl Profile {
    /// Profile scaled so that `integral |Q|^alpha = 1`, verified by
    /// quadrature to 1e-6.
    pub fn normalized(kind: ProfileKind, cfg: &FieldConfig) -> Result<Profile> {
        kind.validate()?;
        let axis = kind.axis_alpha_integral(cfg.alpha);
        let total = axis.powi(cfg.dim_l as i32);
        let profile = Profile { kind, scale: total.powf(-1.0 / cfg.alpha) };
        let integral = profile.alpha_integral_quadrature(cfg)?;
        if (integral - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "profile normalization check failed: integral |Q|^alpha = {integral}"
            )));
        }
        Ok(profile)
    }

    /// Unchecked scale; used to build deliberately mis-normalized
    /// profiles for negative controls.
    pub fn with_scale(kind: ProfileKind, scale: f64) -> Result<Profile> {
        kind.validate()?;
        Ok(Profile { kind, scale })
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        self.scale * t.iter().map(|&x| self.kind.axis_value(x)).product::<f64>()
    }

    /// Midpoint quadrature of `|Q|^alpha` over the support box.
    pub fn alpha_integral_quadrature(&self, cfg: &FieldConfig) -> Result<f64> {
        let m = self.kind.support_half_width();
        let cells_per_dim: usize = match cfg.dim_l {
            1 => 1 << 16,
            2 => 1 << 9,
            _ => 1 << 6,
        };
        let rule = QuadratureRule::new(Window::new(m)?, 2.0 * m / cells_per_dim as f64, cfg.dim_l)?;
        let w = rule.weight();
        Ok(rule.nodes().iter().map(|p| w * self.eval(p).abs().powf(cfg.alpha)).sum())
    }
}

/// A seeded sampler that, given any finite site set, produces one joint
/// realization of the field at those sites.
#[derive(Debug, Clone)]
pub enum Representor {
    /// `Z_j(t) = exp(W_j(t) - v(t)/2)` with `W` the pinned Gaussian
    /// field; `Z(0) = (1, ..., 1)` exactly.
    BrownResnick { cfg: FieldConfig, gaussian: GaussianSampler },
    /// Deterministic profile; satisfies the cluster normalization
    /// `integral |Q|^alpha = 1` when built through `new_cluster`.
    ClusterProfile { cfg: FieldConfig, profile: Profile },
    /// Constant field; with value 1 the simplest valid representor.
    Constant { cfg: FieldConfig, value: f64 },
}

impl Representor {
    pub fn brown_resnick(cfg: FieldConfig, gaussian: GaussianSampler) -> Representor {
        Representor::BrownResnick { cfg, gaussian }
    }

    pub fn new_cluster(cfg: FieldConfig, kind: ProfileKind) -> Result<Representor> {
        let profile = Profile::normalized(kind, &cfg)?;
        Ok(Representor::ClusterProfile { cfg, profile })
    }

    /// Skips the normalization check; negative-control support.
    pub fn cluster_unchecked(cfg: FieldConfig, profile: Profile) -> Representor {
        Representor::ClusterProfile { cfg, profile }
    }

    pub fn constant(cfg: FieldConfig, value: f64) -> Result<Representor> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::Config(format!("constant representor value must be >= 0, got {value}")));
        }
        Ok(Representor::Constant { cfg, value })
    }
}

impl PathSource for Representor {
    fn cfg(&self) -> &FieldConfig {
        match self {
            Representor::BrownResnick { cfg, .. }
            | Representor::ClusterProfile { cfg, .. }
            | Representor::Constant { cfg, .. } => cfg,
        }
    }

    fn label(&self) -> String {
        match self {
            Representor::BrownResnick { .. } => "brown_resnick".into(),
            Representor::ClusterProfile { .. } => "cluster_profile".into(),
            Representor::Constant { .. } => "constant".into(),
        }
    }

    fn unit_origin_norm(&self) -> bool {
        let cfg = self.cfg();
        let origin_value = match self {
            Representor::BrownResnick { .. } => 1.0,
            Representor::ClusterProfile { profile, .. } => {
                profile.eval(&vec![0.0; cfg.dim_l])
            }
            Representor::Constant { value, .. } => *value,
        };
        norm_unchecked(&vec![origin_value; cfg.dim_d], cfg.norm) == 1.0
    }

    fn prepare(&self, sites: &PointSet) -> Result<Box<dyn PreparedSource>> {
        match self {
            Representor::BrownResnick { cfg, gaussian } => {
                let prepared = gaussian.prepare(sites, cfg.dim_d)?;
                let variances = prepared.variances().to_vec();
                Ok(Box::new(PreparedBrownResnick { prepared, variances }))
            }
            Representor::ClusterProfile { cfg, profile } => {
                let path = cluster_sample(sites, profile, cfg)?;
                Ok(Box::new(PreparedDeterministic { path }))
            }
            Representor::Constant { cfg, value } => {
                let path = PathSample::new(
                    sites.clone(),
                    cfg.dim_d,
                    vec![*value; sites.len() * cfg.dim_d],
                )?;
                Ok(Box::new(PreparedDeterministic { path }))
            }
        }
    }
}

struct PreparedBrownResnick {
    prepared: PreparedGaussian,
    variances: Vec<f64>,
}

impl PreparedSource for PreparedBrownResnick {
    fn draw(&self, rng: &mut Stream) -> Result<Draw> {
        let path = br_sample_from_gaussian(&self.prepared, &self.variances, rng)?;
        Ok(Draw { path, weight: 1.0, diag: DrawDiag::default() })
    }
}

/// Exponentiate one pinned Gaussian draw into the log-normal field.
fn br_sample_from_gaussian(
    prepared: &PreparedGaussian,
    variances: &[f64],
    rng: &mut Stream,
) -> Result<PathSample> {
    let w = prepared.draw(rng)?;
    let d = w.dim_d();
    let mut values = Vec::with_capacity(w.len() * d);
    for (i, &variance) in variances.iter().enumerate() {
        let half_var = variance / 2.0;
        for j in 0..d {
            values.push((w.row(i)[j] - half_var).exp());
        }
    }
    PathSample::new(w.sites().clone(), d, values)
}

/// One log-normal draw at `sites`.
pub fn br_sample(
    sites: &PointSet,
    gaussian: &GaussianSampler,
    cfg: &FieldConfig,
    rng: &mut Stream,
) -> Result<PathSample> {
    let prepared = gaussian.prepare(sites, cfg.dim_d)?;
    let variances = prepared.variances().to_vec();
    br_sample_from_gaussian(&prepared, &variances, rng)
}

/// Evaluate a profile at `sites` (per component, all components equal).
pub fn cluster_sample(sites: &PointSet, profile: &Profile, cfg: &FieldConfig) -> Result<PathSample> {
    let mut values = Vec::with_capacity(sites.len() * cfg.dim_d);
    for p in sites.iter() {
        let v = profile.eval(p);
        values.extend(std::iter::repeat_n(v, cfg.dim_d));
    }
    PathSample::new(sites.clone(), cfg.dim_d, values)
}

struct PreparedDeterministic {
    path: PathSample,
}

impl PreparedSource for PreparedDeterministic {
    fn draw(&self, _rng: &mut Stream) -> Result<Draw> {
        Ok(Draw { path: self.path.clone(), weight: 1.0, diag: DrawDiag::default() })
    }
}

/// Split a signed field into the nonnegative pair `(max(v, 0), max(-v, 0))`
/// per component; output dimension doubles. For scalar input the sup-norm
/// of the output equals `|v|`, and `v` is recovered exactly as the
/// difference of the halves.
pub fn signed_split(path: &PathSample) -> PathSample {
    let d = path.dim_d();
    let mut values = Vec::with_capacity(path.len() * 2 * d);
    for i in 0..path.len() {
        for &v in path.row(i) {
            values.push(v.max(0.0));
            values.push((-v).max(0.0));
        }
    }
    PathSample::new(path.sites().clone(), 2 * d, values).expect("signed split preserves shape")
}

/// Integer lattice points of the window: the default finite stand-in for
/// the countable separant.
pub fn integer_lattice(window: &Window, dim_l: usize) -> PointSet {
    let m = window.half_width.floor() as i64;
    let axis: Vec<f64> = (-m..=m).map(|k| k as f64).collect();
    let mut pts = Vec::new();
    let mut idx = vec![0usize; dim_l];
    loop {
        pts.push(idx.iter().map(|&i| axis[i]).collect::<Point>());
        let mut dim = dim_l;
        loop {
            if dim == 0 {
                return PointSet::new(dim_l, pts).expect("integer lattice");
            }
            dim -= 1;
            idx[dim] += 1;
            if idx[dim] < axis.len() {
                break;
            }
            idx[dim] = 0;
        }
    }
}

/// Monte Carlo validation of the representor normalization
/// `E |Z(0)|^alpha = 1` (within 4 standard errors) and of path positivity
/// on the truncated separant (every draw must have a positive value
/// somewhere on it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub margin: MeanSe,
    pub margin_ok: bool,
    pub positivity_failures: u64,
    pub positivity_ok: bool,
    pub n: u64,
    pub separant_size: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.margin_ok && self.positivity_ok
    }
}

pub fn validate_representor(
    source: &dyn PathSource,
    separant: &PointSet,
    n: u64,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<ValidationReport> {
    if n < 1000 {
        return Err(Error::Contract("validation needs at least 1e3 samples".into()));
    }
    let cfg = source.cfg().clone();
    let mut binder = SiteBinder::new(cfg.dim_l);
    let origin_idx = binder.add(&vec![0.0; cfg.dim_l]);
    let sep_idx = binder.add_set(separant);
    let sites = binder.into_sites();
    let prepared = source.prepare(&sites)?;

    let failures = std::sync::atomic::AtomicU64::new(0);
    let est = crate::stream::estimate_mean(pool, master_seed, lane::VALIDATE, n, |_, rng| {
        let draw = prepared.draw(rng)?;
        let norms = draw.path.norms(cfg.norm);
        let sup_on_separant = sep_idx.iter().map(|&i| norms[i]).fold(0.0_f64, f64::max);
        if !(sup_on_separant > 0.0) && draw.weight > 0.0 {
            failures.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        Ok((draw.weight * norms[origin_idx].powf(cfg.alpha), draw.diag))
    })?;

    let margin = MeanSe::from(&est.est);
    let failures = failures.into_inner();
    Ok(ValidationReport {
        margin,
        margin_ok: (margin.mean - 1.0).abs() <= 4.0 * margin.se,
        positivity_failures: failures,
        positivity_ok: failures == 0,
        n,
        separant_size: separant.len(),
    })
}
