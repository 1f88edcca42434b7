//! Homogeneous functionals on path samples, midpoint quadrature over
//! symmetric windows, shift densities, and the uniform-sampling integral
//! estimator.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimate::MCEstimate;
use crate::field::{norm_unchecked, NormKind, PathSample, Point, PointSet, Window};
use crate::stream::Stream;

/// Midpoint rule on `[-m, m]^l`. Nodes are cell centers computed as
/// integer multiples of the quantum `m / k`, so node coordinates, snapped
/// shifts and lattice translates of nodes stay exactly representable when
/// `m / k` is dyadic. With an odd cell count the origin is an interior
/// node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub window: Window,
    pub step: f64,
    pub dim_l: usize,
    cells_per_dim: usize,
}

impl QuadratureRule {
    pub fn new(window: Window, step: f64, dim_l: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("quadrature step must be positive, got {step}")));
        }
        let m = window.half_width;
        let k = (2.0 * m / step).round();
        if k < 1.0 || (k * step - 2.0 * m).abs() > 1e-9 * (1.0 + 2.0 * m) {
            return Err(Error::Config(format!(
                "step {step} does not divide the window [-{m}, {m}]"
            )));
        }
        Ok(Self { window, step, dim_l, cells_per_dim: k as usize })
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    /// Per-node weight `step^l`.
    pub fn weight(&self) -> f64 {
        self.step.powi(self.dim_l as i32)
    }

    fn axis_coords(&self) -> Vec<f64> {
        let k = self.cells_per_dim;
        let q = self.window.half_width / k as f64;
        (0..k).map(|i| (2 * i as i64 + 1 - k as i64) as f64 * q).collect()
    }

    /// Grid nodes in lexicographic order.
    pub fn nodes(&self) -> PointSet {
        let axis = self.axis_coords();
        let mut pts = Vec::with_capacity(axis.len().pow(self.dim_l as u32));
        let mut idx = vec![0usize; self.dim_l];
        loop {
            pts.push(idx.iter().map(|&i| axis[i]).collect::<Point>());
            let mut dim = self.dim_l;
            loop {
                if dim == 0 {
                    return PointSet::new(self.dim_l, pts).expect("grid nodes");
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

    /// A wider rule on the same lattice: cells are appended on each side
    /// until the half-width at least doubles, so every node of `self` is
    /// also a node of the extension.
    pub fn extended_double(&self) -> QuadratureRule {
        let k = self.cells_per_dim;
        let q = self.window.half_width / k as f64;
        let extra = k.div_ceil(2);
        let k2 = k + 2 * extra;
        QuadratureRule {
            window: Window { half_width: k2 as f64 * q },
            step: self.step,
            dim_l: self.dim_l,
            cells_per_dim: k2,
        }
    }
}

/// Distribution of the randomizing shift `N`, with an evaluable density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftDensity {
    /// Product of centered normals; strictly positive on all of `R^l`.
    Gaussian { sigma: f64 },
    /// Constant on `[-m, m]^l`, zero outside. Violates the strict
    /// positivity the constructions assume; gated behind an explicit
    /// acknowledgement for experiments.
    UniformWindow {
        half_width: f64,
        #[serde(default)]
        allow_nonpositive: bool,
    },
}

impl ShiftDensity {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("shift density sigma must be positive, got {sigma}")));
        }
        Ok(ShiftDensity::Gaussian { sigma })
    }

    pub fn uniform_window(half_width: f64, allow_nonpositive: bool) -> Result<Self> {
        let d = ShiftDensity::UniformWindow { half_width, allow_nonpositive };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ShiftDensity::Gaussian { sigma } => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::Config(format!("shift density sigma must be positive, got {sigma}")));
                }
            }
            ShiftDensity::UniformWindow { half_width, allow_nonpositive } => {
                if !(half_width > 0.0) || !half_width.is_finite() {
                    return Err(Error::Config(format!(
                        "uniform shift window must be positive, got {half_width}"
                    )));
                }
                if !allow_nonpositive {
                    return Err(Error::Config(
                        "uniform_window shift density is zero outside its window; \
                         set allow_nonpositive = true to acknowledge"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Density value at `t`.
    pub fn pdf(&self, t: &[f64]) -> f64 {
        match *self {
            ShiftDensity::Gaussian { sigma } => {
                let c = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                t.iter().map(|&x| c * (-x * x / (2.0 * sigma * sigma)).exp()).product()
            }
            ShiftDensity::UniformWindow { half_width, .. } => {
                if t.iter().all(|&x| x.abs() <= half_width) {
                    (2.0 * half_width).powi(-(t.len() as i32))
                } else {
                    0.0
                }
            }
        }
    }

    /// Draw one shift by per-coordinate inverse CDF.
    pub fn sample(&self, dim_l: usize, rng: &mut Stream) -> Point {
        match *self {
            ShiftDensity::Gaussian { sigma } => {
                let normal = Normal::new(0.0, sigma).expect("gaussian shift density");
                (0..dim_l)
                    .map(|_| {
                        let u: f64 = rand::Rng::sample(rng, rand::distr::Open01);
                        normal.inverse_cdf(u)
                    })
                    .collect()
            }
            ShiftDensity::UniformWindow { half_width, .. } => (0..dim_l)
                .map(|_| {
                    let u: f64 = rand::Rng::random(rng);
                    (2.0 * u - 1.0) * half_width
                })
                .collect(),
        }
    }
}

/// Round each coordinate to the nearest multiple of `step`; returns the
/// snapped point and the sup-distance moved.
pub fn snap_to_lattice(p: &[f64], step: f64) -> (Point, f64) {
    let mut err: f64 = 0.0;
    let snapped = p
        .iter()
        .map(|&x| {
            let s = (x / step).round() * step;
            err = err.max((x - s).abs());
            s
        })
        .collect();
    (snapped, err)
}

/// Quadrature of `gamma(t) * |f(t)|^alpha` over the rule's window; the
/// discrete stand-in for the integral functional. `gamma` defaults to 1.
pub fn integral_s(
    path: &PathSample,
    rule: &QuadratureRule,
    alpha: f64,
    norm: NormKind,
    gamma: Option<&ShiftDensity>,
) -> Result<f64> {
    let nodes = rule.nodes();
    if *path.sites() != nodes {
        return Err(Error::Contract(
            "integral_s: path sites do not match the quadrature nodes".into(),
        ));
    }
    let w = rule.weight();
    let mut total = 0.0;
    for i in 0..path.len() {
        let g = gamma.map_or(1.0, |d| d.pdf(nodes.point(i)));
        total += w * g * norm_unchecked(path.row(i), norm).powf(alpha);
    }
    Ok(total)
}

/// Lebesgue measure of `{ t in window : |f(t)| > 1 }` by quadrature.
pub fn sojourn_b(path: &PathSample, rule: &QuadratureRule, norm: NormKind) -> Result<f64> {
    if *path.sites() != rule.nodes() {
        return Err(Error::Contract(
            "sojourn_b: path sites do not match the quadrature nodes".into(),
        ));
    }
    let w = rule.weight();
    let count = (0..path.len()).filter(|&i| norm_unchecked(path.row(i), norm) > 1.0).count();
    Ok(w * count as f64)
}

/// Uniform-sampling estimator of `integral of W over the window`:
/// `vol / n * sum W(t_j)` with `t_j` uniform, reported with its standard
/// error.
pub fn mc_integral<F>(eval: F, window: &Window, dim_l: usize, n: u64, rng: &mut Stream) -> MCEstimate
where
    F: Fn(&[f64]) -> f64,
{
    let vol = window.volume(dim_l);
    let m = window.half_width;
    let mut est = MCEstimate::new();
    let mut point = vec![0.0; dim_l];
    for _ in 0..n {
        for c in point.iter_mut() {
            let u: f64 = rand::Rng::random(rng);
            *c = (2.0 * u - 1.0) * m;
        }
        est.push(vol * eval(&point));
    }
    est
}

/// Descriptor of a built-in functional; appears verbatim in configs and
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    /// Constant 1; degree 0.
    One,
    /// `max_i c_i |f(t_i)|^alpha`; degree alpha.
    WeightedMax { sites: Vec<Point>, coeffs: Vec<f64> },
    /// `sum_i c_i |f(t_i)|^alpha`; degree alpha.
    WeightedSum { sites: Vec<Point>, coeffs: Vec<f64> },
    /// `|f(s)|^alpha / sum_j q_j |f(t_j)|^alpha` with 0/0 = 0; degree 0.
    Ratio { site: Point, sites: Vec<Point>, weights: Vec<f64> },
    /// Quadrature of `gamma |f|^alpha` over a lattice window; degree alpha.
    SGammaQuadrature {
        half_width: f64,
        step: f64,
        #[serde(default)]
        gamma: Option<ShiftDensity>,
    },
    /// Pointwise product; degrees add.
    Product { a: Box<FunctionalSpec>, b: Box<FunctionalSpec> },
    /// `numerator / S_gamma`; degree `deg(numerator) - alpha`.
    QuotientSGamma {
        numerator: Box<FunctionalSpec>,
        half_width: f64,
        step: f64,
        #[serde(default)]
        gamma: Option<ShiftDensity>,
    },
    /// `|f(s)| / (|f(s)| + |f(u)|)` with 0/0 = 0; bounded, degree 0.
    BoundedZeroHom { site: Point, other: Point },
    /// `1{ inner(f) > level }` for a degree-0 inner; degree 0.
    Threshold { inner: Box<FunctionalSpec>, level: f64 },
    /// `min(|f(s)|, cap)`; bounded but not homogeneous.
    ClippedNorm { site: Point, cap: f64 },
}

impl FunctionalSpec {
    /// Homogeneity degree, if the functional is homogeneous.
    pub fn degree(&self, alpha: f64) -> Option<f64> {
        match self {
            FunctionalSpec::One => Some(0.0),
            FunctionalSpec::WeightedMax { .. } | FunctionalSpec::WeightedSum { .. } => Some(alpha),
            FunctionalSpec::Ratio { .. } => Some(0.0),
            FunctionalSpec::SGammaQuadrature { .. } => Some(alpha),
            FunctionalSpec::Product { a, b } => Some(a.degree(alpha)? + b.degree(alpha)?),
            FunctionalSpec::QuotientSGamma { numerator, .. } => {
                Some(numerator.degree(alpha)? - alpha)
            }
            FunctionalSpec::BoundedZeroHom { .. } => Some(0.0),
            FunctionalSpec::Threshold { inner, .. } => {
                if inner.degree(alpha) == Some(0.0) {
                    Some(0.0)
                } else {
                    None
                }
            }
            FunctionalSpec::ClippedNorm { .. } => None,
        }
    }

    /// Whether the evaluation is bounded above by a constant.
    pub fn bounded(&self) -> bool {
        match self {
            FunctionalSpec::One
            | FunctionalSpec::BoundedZeroHom { .. }
            | FunctionalSpec::Threshold { .. }
            | FunctionalSpec::ClippedNorm { .. } => true,
            FunctionalSpec::Ratio { site, sites, weights } => sites
                .iter()
                .zip(weights)
                .any(|(t, &q)| q > 0.0 && t == site),
            FunctionalSpec::Product { a, b } => a.bounded() && b.bounded(),
            _ => false,
        }
    }

    fn rule(&self, half_width: f64, step: f64, dim_l: usize) -> Result<QuadratureRule> {
        QuadratureRule::new(Window::new(half_width)?, step, dim_l)
    }

    /// The evaluation sites this functional reads, in a fixed order.
    pub fn required_sites(&self, dim_l: usize) -> Result<Vec<Point>> {
        Ok(match self {
            FunctionalSpec::One => vec![],
            FunctionalSpec::WeightedMax { sites, coeffs }
            | FunctionalSpec::WeightedSum { sites, coeffs } => {
                if sites.len() != coeffs.len() || sites.is_empty() {
                    return Err(Error::Config(
                        "weighted functional needs matching, non-empty sites and coeffs".into(),
                    ));
                }
                sites.clone()
            }
            FunctionalSpec::Ratio { site, sites, weights } => {
                if sites.len() != weights.len() || sites.is_empty() {
                    return Err(Error::Config(
                        "ratio functional needs matching, non-empty sites and weights".into(),
                    ));
                }
                let mut all = vec![site.clone()];
                all.extend(sites.iter().cloned());
                all
            }
            FunctionalSpec::SGammaQuadrature { half_width, step, .. } => {
                let nodes = self.rule(*half_width, *step, dim_l)?.nodes();
                nodes.points().to_vec()
            }
            FunctionalSpec::Product { a, b } => {
                let mut all = a.required_sites(dim_l)?;
                all.extend(b.required_sites(dim_l)?);
                all
            }
            FunctionalSpec::QuotientSGamma { numerator, half_width, step, .. } => {
                let mut all = numerator.required_sites(dim_l)?;
                let nodes = self.rule(*half_width, *step, dim_l)?.nodes();
                all.extend(nodes.points().iter().cloned());
                all
            }
            FunctionalSpec::BoundedZeroHom { site, other } => {
                vec![site.clone(), other.clone()]
            }
            FunctionalSpec::Threshold { inner, .. } => inner.required_sites(dim_l)?,
            FunctionalSpec::ClippedNorm { site, .. } => vec![site.clone()],
        })
    }

    /// Compile against a slice of indices into a per-draw norm vector.
    /// `indices` is parallel to `required_sites`.
    pub fn bind(&self, indices: &[usize], alpha: f64, dim_l: usize) -> Result<BoundFunctional> {
        let (compiled, used) = self.compile(indices, dim_l)?;
        debug_assert_eq!(used, indices.len());
        Ok(BoundFunctional { compiled, alpha })
    }

    fn compile(&self, idx: &[usize], dim_l: usize) -> Result<(Compiled, usize)> {
        Ok(match self {
            FunctionalSpec::One => (Compiled::One, 0),
            FunctionalSpec::WeightedMax { coeffs, sites } => {
                (Compiled::WeightedMax { idx: idx[..sites.len()].to_vec(), coeffs: coeffs.clone() }, sites.len())
            }
            FunctionalSpec::WeightedSum { coeffs, sites } => {
                (Compiled::WeightedSum { idx: idx[..sites.len()].to_vec(), coeffs: coeffs.clone() }, sites.len())
            }
            FunctionalSpec::Ratio { sites, weights, .. } => (
                Compiled::Ratio {
                    num: idx[0],
                    den_idx: idx[1..1 + sites.len()].to_vec(),
                    weights: weights.clone(),
                },
                1 + sites.len(),
            ),
            FunctionalSpec::SGammaQuadrature { half_width, step, gamma } => {
                let rule = self.rule(*half_width, *step, dim_l)?;
                let weights = sgamma_weights(&rule, gamma.as_ref());
                (
                    Compiled::SGamma { idx: idx[..weights.len()].to_vec(), weights },
                    rule.nodes().len(),
                )
            }
            FunctionalSpec::Product { a, b } => {
                let (ca, na) = a.compile(idx, dim_l)?;
                let (cb, nb) = b.compile(&idx[na..], dim_l)?;
                (Compiled::Product(Box::new(ca), Box::new(cb)), na + nb)
            }
            FunctionalSpec::QuotientSGamma { numerator, half_width, step, gamma } => {
                let (cn, nn) = numerator.compile(idx, dim_l)?;
                let rule = self.rule(*half_width, *step, dim_l)?;
                let weights = sgamma_weights(&rule, gamma.as_ref());
                let den = Compiled::SGamma { idx: idx[nn..nn + weights.len()].to_vec(), weights };
                let used = nn + rule.nodes().len();
                (Compiled::Quotient(Box::new(cn), Box::new(den)), used)
            }
            FunctionalSpec::BoundedZeroHom { .. } => {
                (Compiled::BoundedZeroHom { i: idx[0], j: idx[1] }, 2)
            }
            FunctionalSpec::Threshold { inner, level } => {
                let (ci, ni) = inner.compile(idx, dim_l)?;
                (Compiled::Threshold(Box::new(ci), *level), ni)
            }
            FunctionalSpec::ClippedNorm { cap, .. } => {
                (Compiled::ClippedNorm { i: idx[0], cap: *cap }, 1)
            }
        })
    }
}

fn sgamma_weights(rule: &QuadratureRule, gamma: Option<&ShiftDensity>) -> Vec<f64> {
    let w = rule.weight();
    rule.nodes()
        .iter()
        .map(|node| w * gamma.map_or(1.0, |d| d.pdf(node)))
        .collect()
}

/// A functional compiled against site indices; evaluates on the vector of
/// per-site value norms.
#[derive(Debug, Clone)]
pub struct BoundFunctional {
    compiled: Compiled,
    alpha: f64,
}

impl BoundFunctional {
    pub fn eval(&self, norms: &[f64]) -> f64 {
        self.compiled.eval(norms, self.alpha)
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    One,
    WeightedMax { idx: Vec<usize>, coeffs: Vec<f64> },
    WeightedSum { idx: Vec<usize>, coeffs: Vec<f64> },
    Ratio { num: usize, den_idx: Vec<usize>, weights: Vec<f64> },
    SGamma { idx: Vec<usize>, weights: Vec<f64> },
    Product(Box<Compiled>, Box<Compiled>),
    Quotient(Box<Compiled>, Box<Compiled>),
    BoundedZeroHom { i: usize, j: usize },
    Threshold(Box<Compiled>, f64),
    ClippedNorm { i: usize, cap: f64 },
}

impl Compiled {
    fn eval(&self, norms: &[f64], alpha: f64) -> f64 {
        match self {
            Compiled::One => 1.0,
            Compiled::WeightedMax { idx, coeffs } => idx
                .iter()
                .zip(coeffs)
                .map(|(&i, &c)| c * norms[i].powf(alpha))
                .fold(0.0_f64, f64::max),
            Compiled::WeightedSum { idx, coeffs } => {
                idx.iter().zip(coeffs).map(|(&i, &c)| c * norms[i].powf(alpha)).sum()
            }
            Compiled::Ratio { num, den_idx, weights } => {
                let numerator = norms[*num].powf(alpha);
                let denominator: f64 =
                    den_idx.iter().zip(weights).map(|(&i, &q)| q * norms[i].powf(alpha)).sum();
                zero_over_zero(numerator, denominator)
            }
            Compiled::SGamma { idx, weights } => {
                idx.iter().zip(weights).map(|(&i, &w)| w * norms[i].powf(alpha)).sum()
            }
            Compiled::Product(a, b) => a.eval(norms, alpha) * b.eval(norms, alpha),
            Compiled::Quotient(a, b) => {
                zero_over_zero(a.eval(norms, alpha), b.eval(norms, alpha))
            }
            Compiled::BoundedZeroHom { i, j } => {
                zero_over_zero(norms[*i], norms[*i] + norms[*j])
            }
            Compiled::Threshold(inner, level) => {
                if inner.eval(norms, alpha) > *level {
                    1.0
                } else {
                    0.0
                }
            }
            Compiled::ClippedNorm { i, cap } => norms[*i].min(*cap),
        }
    }
}

#[inline]
fn zero_over_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Convenience: evaluate a functional directly on a path sample whose
/// sites must contain every required site.
pub fn eval_on_path(
    spec: &FunctionalSpec,
    path: &PathSample,
    alpha: f64,
    norm: NormKind,
) -> Result<f64> {
    let dim_l = path.sites().dim();
    let required = spec.required_sites(dim_l)?;
    let indices = required
        .iter()
        .map(|p| {
            path.sites()
                .position_of(p)
                .ok_or_else(|| Error::Contract(format!("path lacks required site {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = spec.bind(&indices, alpha, dim_l)?;
    Ok(bound.eval(&path.norms(norm)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::erf::erf;

    fn line_rule(half_width: f64, step: f64) -> QuadratureRule {
        QuadratureRule::new(Window::new(half_width).unwrap(), step, 1).unwrap()
    }

    fn const_path(rule: &QuadratureRule, value: f64) -> PathSample {
        PathSample::new(rule.nodes(), 1, vec![value; rule.nodes().len()]).unwrap()
    }

    #[test]
    fn weights_sum_to_window_volume() {
        for (m, s) in [(1.0, 0.25), (8.125, 0.25), (12.625, 0.25), (2.0, 0.125)] {
            let rule = line_rule(m, s);
            let total = rule.weight() * rule.nodes().len() as f64;
            assert!((total - 2.0 * m).abs() <= 1e-12, "sum {total} vs {}", 2.0 * m);
            assert!(rule.nodes().iter().all(|p| rule.window.contains(p)));
        }
        let rule2 = QuadratureRule::new(Window::new(1.0).unwrap(), 0.5, 2).unwrap();
        let total2 = rule2.weight() * rule2.nodes().len() as f64;
        assert!((total2 - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn odd_cell_count_contains_origin() {
        let rule = line_rule(8.125, 0.25);
        assert_eq!(rule.cells_per_dim() % 2, 1);
        assert!(rule.nodes().position_of(&[0.0]).is_some());
    }

    #[test]
    fn extended_rule_shares_lattice() {
        let rule = line_rule(8.125, 0.25);
        let wide = rule.extended_double();
        assert!(wide.window.half_width >= 2.0 * rule.window.half_width - rule.step);
        let (narrow_nodes, wide_nodes) = (rule.nodes(), wide.nodes());
        for node in narrow_nodes.iter() {
            assert!(wide_nodes.position_of(node).is_some(), "missing {node:?}");
        }
    }

    #[test]
    fn integral_s_constant_and_scaling() {
        let rule = line_rule(1.0, 0.0625);
        let path = const_path(&rule, 1.0);
        let s = integral_s(&path, &rule, 1.0, NormKind::Sup, None).unwrap();
        assert!((s - 2.0).abs() <= 1e-12);

        // alpha-homogeneity of S.
        let alpha = 1.7;
        let c = 3.2;
        let base = integral_s(&path, &rule, alpha, NormKind::Sup, None).unwrap();
        let scaled = integral_s(&path.scaled(c), &rule, alpha, NormKind::Sup, None).unwrap();
        assert_relative_eq!(scaled, c.powf(alpha) * base, max_relative = 1e-9);
    }

    #[test]
    fn integral_s_gaussian_pdf_against_erf() {
        let rule = line_rule(8.0, 0.01);
        let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let nodes = rule.nodes();
        let values: Vec<f64> = nodes.iter().map(|p| pdf(p[0])).collect();
        let path = PathSample::new(nodes, 1, values).unwrap();
        let s = integral_s(&path, &rule, 1.0, NormKind::Sup, None).unwrap();
        let oracle = erf(8.0 / 2.0_f64.sqrt());
        assert!((s - oracle).abs() < 1e-4, "S = {s}, oracle = {oracle}");
    }

    #[test]
    fn integral_s_rejects_site_mismatch() {
        let rule = line_rule(1.0, 0.25);
        let other = line_rule(1.0, 0.125);
        let path = const_path(&other, 1.0);
        assert!(matches!(
            integral_s(&path, &rule, 1.0, NormKind::Sup, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn sojourn_hand_values() {
        let rule = QuadratureRule::new(Window::new(0.5).unwrap(), 0.125, 1).unwrap();
        // Always above 1: sojourn is the whole window length.
        let path = const_path(&rule, 2.0);
        assert_eq!(sojourn_b(&path, &rule, NormKind::Sup).unwrap(), 1.0);
        // Never above.
        let low = const_path(&rule, 0.5);
        assert_eq!(sojourn_b(&low, &rule, NormKind::Sup).unwrap(), 0.0);
        // Single node above: one step's worth.
        let mut values = vec![0.5; rule.nodes().len()];
        values[3] = 1.0 + 1e-9;
        let single = PathSample::new(rule.nodes(), 1, values).unwrap();
        assert_eq!(sojourn_b(&single, &rule, NormKind::Sup).unwrap(), 0.125);
    }

    #[test]
    fn mc_integral_constant_is_exact() {
        let mut rng = derive_stream(5, 0, 0);
        let est = mc_integral(|_| 3.0, &Window::new(2.0).unwrap(), 1, 1000, &mut rng);
        assert_eq!(est.mean, 12.0);
        assert_eq!(est.se(), 0.0);
    }

    #[test]
    fn mc_integral_indicator_unit_interval() {
        let mut rng = derive_stream(6, 0, 0);
        let est = mc_integral(
            |t| if (0.0..=1.0).contains(&t[0]) { 1.0 } else { 0.0 },
            &Window::new(2.0).unwrap(),
            1,
            1_000_000,
            &mut rng,
        );
        assert!((est.mean - 1.0).abs() < 3.0 * est.se(), "mean {} se {}", est.mean, est.se());
    }

    #[test]
    fn mc_integral_gaussian_pdf_matches_erf() {
        let mut rng = derive_stream(7, 0, 0);
        let pdf = |t: &[f64]| (-t[0] * t[0] / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let est = mc_integral(pdf, &Window::new(4.0).unwrap(), 1, 1_000_000, &mut rng);
        let oracle = erf(4.0 / 2.0_f64.sqrt());
        assert_relative_eq!(oracle, 0.999936657516334, max_relative = 1e-12);
        assert!((est.mean - oracle).abs() < 3.0 * est.se());
    }

    #[test]
    fn shift_density_pdfs() {
        let g = ShiftDensity::gaussian(1.0).unwrap();
        assert_relative_eq!(g.pdf(&[0.0]), 0.3989422804014327, max_relative = 1e-12);
        let u = ShiftDensity::uniform_window(2.0, true).unwrap();
        assert_eq!(u.pdf(&[1.5]), 0.25);
        assert_eq!(u.pdf(&[2.5]), 0.0);
        assert!(ShiftDensity::uniform_window(2.0, false).is_err());
    }

    #[test]
    fn shift_sampler_snaps_cleanly() {
        let g = ShiftDensity::gaussian(1.0).unwrap();
        let mut rng = derive_stream(8, 0, 0);
        for _ in 0..100 {
            let n = g.sample(1, &mut rng);
            let (snapped, err) = snap_to_lattice(&n, 0.25);
            assert!(err <= 0.125 + 1e-12);
            let ticks = snapped[0] / 0.25;
            assert_eq!(ticks, ticks.round());
        }
    }

    #[test]
    fn functional_hand_values() {
        let sites = PointSet::on_line(&[0.0, 1.0]);
        let path = PathSample::new(sites, 1, vec![2.0, 3.0]).unwrap();
        let fmax = FunctionalSpec::WeightedMax {
            sites: vec![vec![0.0], vec![1.0]],
            coeffs: vec![1.0, 1.0],
        };
        assert_eq!(eval_on_path(&fmax, &path, 1.0, NormKind::Sup).unwrap(), 3.0);

        // 0/0 convention on an all-zero path.
        let zero = PathSample::new(PointSet::on_line(&[0.0, 1.0]), 1, vec![0.0, 0.0]).unwrap();
        let ratio = FunctionalSpec::Ratio {
            site: vec![0.0],
            sites: vec![vec![0.0], vec![1.0]],
            weights: vec![0.5, 0.5],
        };
        assert_eq!(eval_on_path(&ratio, &zero, 1.0, NormKind::Sup).unwrap(), 0.0);
        let bzh = FunctionalSpec::BoundedZeroHom { site: vec![0.0], other: vec![1.0] };
        assert_eq!(eval_on_path(&bzh, &zero, 1.0, NormKind::Sup).unwrap(), 0.0);
    }

    #[test]
    fn product_with_one_equals_integral_s() {
        let rule = line_rule(1.0, 0.125);
        let mut rng = derive_stream(11, 0, 0);
        let values: Vec<f64> =
            (0..rule.nodes().len()).map(|_| rand::Rng::random_range(&mut rng, 0.0..2.0)).collect();
        let path = PathSample::new(rule.nodes(), 1, values).unwrap();
        let spec = FunctionalSpec::Product {
            a: Box::new(FunctionalSpec::One),
            b: Box::new(FunctionalSpec::SGammaQuadrature {
                half_width: 1.0,
                step: 0.125,
                gamma: None,
            }),
        };
        let via_functional = eval_on_path(&spec, &path, 1.3, NormKind::Sup).unwrap();
        let direct = integral_s(&path, &rule, 1.3, NormKind::Sup, None).unwrap();
        assert_relative_eq!(via_functional, direct, max_relative = 1e-12);
    }

    #[test]
    fn degrees_follow_composition_rules() {
        let alpha = 1.5;
        let gmax = FunctionalSpec::WeightedMax { sites: vec![vec![0.0]], coeffs: vec![1.0] };
        let sg = FunctionalSpec::SGammaQuadrature { half_width: 1.0, step: 0.25, gamma: None };
        assert_eq!(gmax.degree(alpha), Some(alpha));
        // item (ii): Gamma_beta * S_gamma has degree alpha + beta.
        let prod = FunctionalSpec::Product { a: Box::new(gmax.clone()), b: Box::new(sg) };
        assert_eq!(prod.degree(alpha), Some(2.0 * alpha));
        // item (iii): Gamma_alpha / S_gamma has degree 0.
        let quot = FunctionalSpec::QuotientSGamma {
            numerator: Box::new(gmax),
            half_width: 1.0,
            step: 0.25,
            gamma: None,
        };
        assert_eq!(quot.degree(alpha), Some(0.0));
        assert_eq!(
            FunctionalSpec::ClippedNorm { site: vec![0.0], cap: 1.0 }.degree(alpha),
            None
        );
    }

    #[test]
    fn descriptor_round_trips_through_json() {
        let spec = FunctionalSpec::QuotientSGamma {
            numerator: Box::new(FunctionalSpec::WeightedSum {
                sites: vec![vec![0.0], vec![0.5]],
                coeffs: vec![1.0, 2.0],
            }),
            half_width: 2.0,
            step: 0.25,
            gamma: Some(ShiftDensity::Gaussian { sigma: 1.0 }),
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: FunctionalSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    // Homogeneity of every homogeneous built-in on random paths and
    // scales, at the declared degree.
    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn builtins_are_homogeneous(
            raw in prop::collection::vec(0.0..5.0f64, 20),
            c in 0.1..10.0f64,
        ) {
            let alpha = 1.25;
            let rule_sites: Vec<Point> =
                line_rule(1.0, 0.25).nodes().points().to_vec();
            let sites = PointSet::on_line(
                &[0.0, 1.0].iter().cloned()
                    .chain(rule_sites.iter().map(|p| p[0]))
                    .collect::<Vec<_>>(),
            );
            let path = PathSample::new(sites.clone(), 1, raw[..sites.len()].to_vec()).unwrap();
            let scaled = path.scaled(c);

            let specs: Vec<FunctionalSpec> = vec![
                FunctionalSpec::One,
                FunctionalSpec::WeightedMax { sites: vec![vec![0.0], vec![1.0]], coeffs: vec![1.0, 0.5] },
                FunctionalSpec::WeightedSum { sites: vec![vec![0.0], vec![1.0]], coeffs: vec![0.3, 0.7] },
                FunctionalSpec::Ratio {
                    site: vec![0.0],
                    sites: vec![vec![0.0], vec![1.0]],
                    weights: vec![0.5, 0.5],
                },
                FunctionalSpec::SGammaQuadrature { half_width: 1.0, step: 0.25, gamma: None },
                FunctionalSpec::BoundedZeroHom { site: vec![0.0], other: vec![1.0] },
                FunctionalSpec::QuotientSGamma {
                    numerator: Box::new(FunctionalSpec::WeightedMax {
                        sites: vec![vec![0.0]],
                        coeffs: vec![1.0],
                    }),
                    half_width: 1.0,
                    step: 0.25,
                    gamma: None,
                },
                FunctionalSpec::Threshold {
                    inner: Box::new(FunctionalSpec::BoundedZeroHom {
                        site: vec![0.0],
                        other: vec![1.0],
                    }),
                    level: 0.5,
                },
            ];
            for spec in &specs {
                let beta = spec.degree(alpha).unwrap();
                let f = eval_on_path(spec, &path, alpha, NormKind::Sup).unwrap();
                let fc = eval_on_path(spec, &scaled, alpha, NormKind::Sup).unwrap();
                prop_assert!(
                    (fc - c.powf(beta) * f).abs() <= 1e-9 * (1.0 + f * c.powf(beta)),
                    "{spec:?}: f(c path) = {fc}, c^b f = {}", c.powf(beta) * f
                );
            }
        }
    }
}
