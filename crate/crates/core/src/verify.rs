//! Paired Monte Carlo verification of the functional identities: both
//! sides of an identity are estimated on independent draws and compared
//! by a Welch test at a configured confidence level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{critical_value, p_value_two_sided, welch_z, MCEstimate, MeanSe};
use crate::field::{PointSet, SiteBinder};
use crate::functional::FunctionalSpec;
use crate::source::{build_source, ModelContext, SourceSpec};
use crate::stream::{collect_values, estimate_mean, lane, DrawDiag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Standard errors above a fifth of the larger mean leave the comparison
/// inconclusive rather than pass/fail.
const INCONCLUSIVE_SE_FRACTION: f64 = 0.2;

/// Welch comparison with the verdict rule. Exactness (zero SE) on one or
/// both sides is handled: equal means pass, unequal means fail.
pub fn decide(left: &MCEstimate, right: &MCEstimate, confidence: f64) -> (f64, f64, Verdict) {
    if !left.mean.is_finite() || !right.mean.is_finite() {
        return (f64::NAN, f64::NAN, Verdict::Inconclusive);
    }
    let z = welch_z(left, right);
    let p = p_value_two_sided(z);
    let scale = left.mean.abs().max(right.mean.abs());
    let ses_ok = if scale > 0.0 {
        left.se() <= INCONCLUSIVE_SE_FRACTION * scale && right.se() <= INCONCLUSIVE_SE_FRACTION * scale
    } else {
        left.se() == 0.0 && right.se() == 0.0
    };
    if !ses_ok {
        return (z, p, Verdict::Inconclusive);
    }
    let verdict = if z.abs() < critical_value(confidence) { Verdict::Pass } else { Verdict::Fail };
    (z, p, verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityKind {
    /// `E F(Z) = E F(B^h Z')` for F of degree alpha.
    Boll,
    /// `E |Z(h)|^a G(Z) = E |Z'(0)|^a G(B^h Z')` for G of degree 0.
    Boll22,
    /// `E |T(h)|^a G(T) = E 1{|T(-h)| != 0} G(B^h T)` for local fields.
    Do20,
    /// `E G(x B^h Y) 1{x |Y(-h)| > 1} = x^a E G(Y') 1{|Y'(h)| > x}`.
    Tyy,
}

fn default_confidence() -> f64 {
    0.99
}

/// One identity instance: the functional, the shift, the two sampler
/// descriptors and the estimation budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub identity: IdentityKind,
    pub functional: FunctionalSpec,
    pub h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    pub left: SourceSpec,
    pub right: SourceSpec,
    pub n: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

/// Serialized verdict record; field names are stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    pub h: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    pub n: u64,
    pub left: MeanSe,
    pub right: MeanSe,
    pub z: f64,
    pub p_value: f64,
    pub verdict: Verdict,
    pub confidence: f64,
    pub seed: u64,
    pub diagnostics: serde_json::Value,
    pub spec: serde_json::Value,
}

impl IdentityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

type SideEval = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

struct SidePlan {
    sites: PointSet,
    eval: SideEval,
}

fn kind_tag(kind: IdentityKind) -> &'static str {
    match kind {
        IdentityKind::Boll => "boll",
        IdentityKind::Boll22 => "boll22",
        IdentityKind::Do20 => "do20",
        IdentityKind::Tyy => "tyy",
    }
}

/// Assemble per-side site lists and evaluators. Functionals are bound
/// positionally: on the right side the same indices read the field drawn
/// at shifted sites, which realizes `F(B^h Z)`.
fn build_sides(spec: &IdentitySpec, alpha: f64, dim_l: usize) -> Result<(SidePlan, SidePlan)> {
    let f = &spec.functional;
    let h = spec.h.clone();
    let minus_h: Vec<f64> = h.iter().map(|v| -v).collect();
    let f_sites = f.required_sites(dim_l)?;
    let origin = vec![0.0; dim_l];

    let shifted =
        |sites: &[Vec<f64>]| -> Vec<Vec<f64>> {
            sites
                .iter()
                .map(|p| p.iter().zip(&h).map(|(a, b)| a - b).collect())
                .collect()
        };

    // One side: functional sites (possibly shifted) plus an auxiliary
    // site whose norm enters as a weight or indicator.
    let assemble = |f_points: Vec<Vec<f64>>,
                    aux: Option<Vec<f64>>|
     -> Result<(PointSet, Vec<usize>, Option<usize>)> {
        let mut binder = SiteBinder::new(dim_l);
        let f_idx: Vec<usize> = f_points.iter().map(|p| binder.add(p)).collect();
        let aux_idx = aux.map(|p| binder.add(&p));
        Ok((binder.into_sites(), f_idx, aux_idx))
    };

    match spec.identity {
        IdentityKind::Boll => {
            let (sites_l, idx_l, _) = assemble(f_sites.clone(), None)?;
            let bound_l = f.bind(&idx_l, alpha, dim_l)?;
            let (sites_r, idx_r, _) = assemble(shifted(&f_sites), None)?;
            let bound_r = f.bind(&idx_r, alpha, dim_l)?;
            Ok((
                SidePlan { sites: sites_l, eval: Box::new(move |norms| bound_l.eval(norms)) },
                SidePlan { sites: sites_r, eval: Box::new(move |norms| bound_r.eval(norms)) },
            ))
        }
        IdentityKind::Boll22 => {
            let (sites_l, idx_l, aux_l) = assemble(f_sites.clone(), Some(h.clone()))?;
            let bound_l = f.bind(&idx_l, alpha, dim_l)?;
            let hl = aux_l.expect("aux site present");
            let (sites_r, idx_r, aux_r) = assemble(shifted(&f_sites), Some(origin.clone()))?;
            let bound_r = f.bind(&idx_r, alpha, dim_l)?;
            let or = aux_r.expect("aux site present");
            Ok((
                SidePlan {
                    sites: sites_l,
                    eval: Box::new(move |norms| norms[hl].powf(alpha) * bound_l.eval(norms)),
                },
                SidePlan {
                    sites: sites_r,
                    eval: Box::new(move |norms| norms[or].powf(alpha) * bound_r.eval(norms)),
                },
            ))
        }
        IdentityKind::Do20 => {
            let (sites_l, idx_l, aux_l) = assemble(f_sites.clone(), Some(h.clone()))?;
            let bound_l = f.bind(&idx_l, alpha, dim_l)?;
            let hl = aux_l.expect("aux site present");
            let (sites_r, idx_r, aux_r) = assemble(shifted(&f_sites), Some(minus_h.clone()))?;
            let bound_r = f.bind(&idx_r, alpha, dim_l)?;
            let mh = aux_r.expect("aux site present");
            Ok((
                SidePlan {
                    sites: sites_l,
                    eval: Box::new(move |norms| norms[hl].powf(alpha) * bound_l.eval(norms)),
                },
                SidePlan {
                    sites: sites_r,
                    // Values are exact zeros or genuinely positive, so a
                    // strict positivity test realizes the indicator.
                    eval: Box::new(move |norms| {
                        if norms[mh] > 0.0 {
                            bound_r.eval(norms)
                        } else {
                            0.0
                        }
                    }),
                },
            ))
        }
        IdentityKind::Tyy => {
            let x = spec.x.ok_or_else(|| {
                Error::Config("tyy identity requires a positive level x".into())
            })?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Config(format!("tyy level must be positive, got {x}")));
            }
            let (sites_l, idx_l, aux_l) = assemble(shifted(&f_sites), Some(minus_h.clone()))?;
            let bound_l = f.bind(&idx_l, alpha, dim_l)?;
            let mh = aux_l.expect("aux site present");
            let (sites_r, idx_r, aux_r) = assemble(f_sites.clone(), Some(h.clone()))?;
            let bound_r = f.bind(&idx_r, alpha, dim_l)?;
            let hr = aux_r.expect("aux site present");
            let x_alpha = x.powf(alpha);
            Ok((
                SidePlan {
                    sites: sites_l,
                    eval: Box::new(move |norms| {
                        if x * norms[mh] > 1.0 {
                            let scaled: Vec<f64> = norms.iter().map(|v| x * v).collect();
                            bound_l.eval(&scaled)
                        } else {
                            0.0
                        }
                    }),
                },
                SidePlan {
                    sites: sites_r,
                    eval: Box::new(move |norms| {
                        if norms[hr] > x {
                            x_alpha * bound_r.eval(norms)
                        } else {
                            0.0
                        }
                    }),
                },
            ))
        }
    }
}

fn check_degree(spec: &IdentitySpec, alpha: f64) -> Result<()> {
    let degree = spec.functional.degree(alpha);
    let expected = match spec.identity {
        IdentityKind::Boll => Some(alpha),
        IdentityKind::Boll22 | IdentityKind::Do20 => Some(0.0),
        IdentityKind::Tyy => return Ok(()),
    };
    if let (Some(want), Some(got)) = (expected, degree) {
        if (want - got).abs() <= 1e-12 {
            return Ok(());
        }
    }
    Err(Error::Config(format!(
        "identity {:?} needs a functional of degree {:?}, got {:?}",
        spec.identity,
        expected,
        degree
    )))
}

fn check_h_on_lattice(h: &[f64], step: f64, dim_l: usize) -> Result<()> {
    if h.len() != dim_l {
        return Err(Error::Config(format!(
            "shift h has dimension {}, field has {dim_l}",
            h.len()
        )));
    }
    for &c in h {
        let ticks = c / step;
        if (ticks - ticks.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "shift coordinate {c} does not lie on the step-{step} lattice"
            )));
        }
    }
    Ok(())
}

const TYY_KURTOSIS_LIMIT: f64 = 100.0;
const TYY_PILOT: u64 = 2000;

/// Estimate both sides of one identity instance and compare. Left and
/// right draws always come from independent streams.
pub fn run_identity(
    ctx: &ModelContext,
    spec: &IdentitySpec,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<IdentityReport> {
    let alpha = ctx.field.alpha;
    let dim_l = ctx.field.dim_l;
    check_degree(spec, alpha)?;
    check_h_on_lattice(&spec.h, ctx.step, dim_l)?;
    if spec.identity != IdentityKind::Tyy && spec.x.is_some() {
        return Err(Error::Config("level x applies to the tyy identity only".into()));
    }
    if !(spec.confidence > 0.0 && spec.confidence < 1.0) {
        return Err(Error::Config(format!("confidence must lie in (0,1), got {}", spec.confidence)));
    }

    let left_source = build_source(ctx, &spec.left)?;
    let right_source = build_source(ctx, &spec.right)?;
    let preflight_left = left_source.preflight(master_seed, pool)?;
    let preflight_right = right_source.preflight(master_seed, pool)?;

    let (plan_l, plan_r) = build_sides(spec, alpha, dim_l)?;
    let norm = ctx.field.norm;

    let run_side = |source: &dyn crate::sample::PathSource,
                    plan: &SidePlan,
                    side_lane: u32|
     -> Result<(MCEstimate, DrawDiag)> {
        let prepared = source.prepare(&plan.sites)?;
        let out = estimate_mean(pool, master_seed, side_lane, spec.n, |_, rng| {
            let draw = prepared.draw(rng)?;
            let norms = draw.path.norms(norm);
            Ok((draw.weight * (plan.eval)(&norms), draw.diag))
        })?;
        Ok((out.est, out.diag))
    };

    let (left_est, left_diag) = run_side(left_source.as_ref(), &plan_l, lane::LEFT)?;
    let (right_est, right_diag) = run_side(right_source.as_ref(), &plan_r, lane::RIGHT)?;

    let (z, p_value, mut verdict) = decide(&left_est, &right_est, spec.confidence);

    // Unbounded functionals in the tail identity get a moment pilot; a
    // wild fourth moment means the Welch approximation is not trusted.
    let mut pilot_kurtosis = None;
    if spec.identity == IdentityKind::Tyy && !spec.functional.bounded() {
        let mut worst = 0.0_f64;
        for (source, plan, pilot_lane) in [
            (left_source.as_ref(), &plan_l, lane::PILOT_LEFT),
            (right_source.as_ref(), &plan_r, lane::PILOT_RIGHT),
        ] {
            let prepared = source.prepare(&plan.sites)?;
            let values =
                collect_values(pool, master_seed, pilot_lane, TYY_PILOT, |_, rng| {
                    let draw = prepared.draw(rng)?;
                    Ok(draw.weight * (plan.eval)(&draw.path.norms(norm)))
                })?;
            worst = worst.max(sample_kurtosis(&values));
        }
        pilot_kurtosis = Some(worst);
        if !worst.is_finite() || worst > TYY_KURTOSIS_LIMIT {
            verdict = Verdict::Inconclusive;
        }
    }

    Ok(IdentityReport {
        identity: kind_tag(spec.identity).into(),
        functional: Some(spec.functional.clone()),
        h: spec.h.clone(),
        x: spec.x,
        n: spec.n,
        left: MeanSe::from(&left_est),
        right: MeanSe::from(&right_est),
        z,
        p_value,
        verdict,
        confidence: spec.confidence,
        seed: master_seed,
        diagnostics: serde_json::json!({
            "left": left_diag,
            "right": right_diag,
            "preflight_left": preflight_left,
            "preflight_right": preflight_right,
            "pilot_kurtosis": pilot_kurtosis,
        }),
        spec: serde_json::to_value(spec).expect("spec serializes"),
    })
}

fn sample_kurtosis(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return 0.0;
    }
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (var * var)
}
