//! Config-level sampler descriptors and their resolution against the
//! experiment context (field configuration, variogram, window, shift
//! density).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, Window};
use crate::functional::{QuadratureRule, ShiftDensity};
use crate::gaussian::{GaussianSampler, Variogram, DEFAULT_JITTER};
use crate::representor::{Profile, ProfileKind, Representor};
use crate::sample::PathSource;
use crate::transform::{TiltMode, TiltedSampler, TailSampler, TransformBase, TransformVariant, TransformedField};

/// Everything a sampler descriptor needs to become a runnable source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelContext {
    pub field: FieldConfig,
    pub variogram: Variogram,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    pub window: Window,
    pub step: f64,
    pub shift_density: ShiftDensity,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl ModelContext {
    pub fn quadrature(&self) -> Result<QuadratureRule> {
        QuadratureRule::new(self.window, self.step, self.field.dim_l)
    }

    pub fn gaussian(&self) -> GaussianSampler {
        GaussianSampler { variogram: self.variogram, jitter: self.jitter }
    }
}

/// Serializable sampler descriptor. `kind` values appear verbatim in
/// config files and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    BrownResnick {
        /// Per-source variogram; defaults to the context's. Mismatched
        /// pairs are the standard negative control.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variogram: Option<Variogram>,
    },
    Constant {
        value: f64,
    },
    ClusterProfile {
        profile: ProfileKind,
        /// Overrides the normalization; negative-control support.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale_override: Option<f64>,
    },
    /// The local field of the base representor.
    Tilted {
        base: Box<SourceSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tilt: Option<TiltMode>,
    },
    /// The tail field: Pareto multiplier times the local field.
    Tail {
        base: Box<SourceSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tilt: Option<TiltMode>,
    },
    /// Shift-randomized construction over the context's window and
    /// shift density.
    Transformed {
        variant: TransformVariant,
        base: Box<SourceSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tilt: Option<TiltMode>,
    },
}

fn build_representor(ctx: &ModelContext, spec: &SourceSpec) -> Result<Representor> {
    match spec {
        SourceSpec::BrownResnick { variogram } => {
            let sampler = GaussianSampler {
                variogram: variogram.unwrap_or(ctx.variogram),
                jitter: ctx.jitter,
            };
            Ok(Representor::brown_resnick(ctx.field.clone(), sampler))
        }
        SourceSpec::Constant { value } => Representor::constant(ctx.field.clone(), *value),
        SourceSpec::ClusterProfile { profile, scale_override } => match scale_override {
            None => Representor::new_cluster(ctx.field.clone(), *profile),
            Some(scale) => Ok(Representor::cluster_unchecked(
                ctx.field.clone(),
                Profile::with_scale(*profile, *scale)?,
            )),
        },
        other => Err(Error::Config(format!(
            "expected a representor descriptor here, got {other:?}"
        ))),
    }
}

fn tilt_for(rep: &Representor, requested: Option<TiltMode>) -> TiltMode {
    requested.unwrap_or(if rep.unit_origin_norm() {
        TiltMode::Exact
    } else {
        TiltMode::Weighted
    })
}

/// Resolve a descriptor into a runnable source.
pub fn build_source(ctx: &ModelContext, spec: &SourceSpec) -> Result<Box<dyn PathSource>> {
    match spec {
        SourceSpec::BrownResnick { .. }
        | SourceSpec::Constant { .. }
        | SourceSpec::ClusterProfile { .. } => {
            Ok(Box::new(build_representor(ctx, spec)?))
        }
        SourceSpec::Tilted { base, tilt } => {
            let rep = build_representor(ctx, base)?;
            let mode = tilt_for(&rep, *tilt);
            Ok(Box::new(TiltedSampler::new(rep, mode)?))
        }
        SourceSpec::Tail { base, tilt } => {
            let rep = build_representor(ctx, base)?;
            let mode = tilt_for(&rep, *tilt);
            Ok(Box::new(TailSampler { tilt: TiltedSampler::new(rep, mode)? }))
        }
        SourceSpec::Transformed { variant, base, tilt } => {
            let rep = build_representor(ctx, base)?;
            let transform_base = if variant.uses_theta() {
                let mode = tilt_for(&rep, *tilt);
                TransformBase::Tilted(TiltedSampler::new(rep, mode)?)
            } else {
                if tilt.is_some() {
                    return Err(Error::Config(format!(
                        "variant {variant:?} acts on a raw representor; drop the tilt field"
                    )));
                }
                TransformBase::Plain(rep)
            };
            Ok(Box::new(TransformedField::new(
                *variant,
                transform_base,
                ctx.shift_density,
                ctx.quadrature()?,
            )?))
        }
    }
}
