//! Experiment configuration: a TOML file with nested sections. Unknown
//! keys are rejected; defaults are materialized into the resolved config
//! that every artifact echoes.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use shiftfield::{
    DeHaanConfig, FieldConfig, FunctionalSpec, IdentityKind, IdentitySpec, ModelContext,
    NormKind, ProfileKind, ShiftDensity, SourceSpec, TransformVariant, Variogram, Window,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub alpha: f64,
    #[serde(default = "one")]
    pub dim_d: usize,
    #[serde(default = "one")]
    pub dim_l: usize,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
}

fn one() -> usize {
    1
}

fn default_norm() -> NormKind {
    NormKind::Sup
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub half_width: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n: u64,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DehaanSection {
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
    #[serde(default = "default_stop_quantile")]
    pub stop_quantile: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_bound_estimate: Option<f64>,
}

fn default_max_terms() -> usize {
    500
}

fn default_stop_quantile() -> f64 {
    0.9999
}

impl Default for DehaanSection {
    fn default() -> Self {
        Self {
            max_terms: default_max_terms(),
            stop_quantile: default_stop_quantile(),
            sup_bound_estimate: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub identity: IdentityKind,
    pub functional: FunctionalSpec,
    pub h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    pub left: SourceSpec,
    pub right: SourceSpec,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.99
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSection {
    pub source: SourceSpec,
    pub sites: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    pub variant: TransformVariant,
    pub base: SourceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<shiftfield::TiltMode>,
    pub sites: Vec<Vec<f64>>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
}

fn default_replicates() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub source: SourceSpec,
    pub sites: Vec<Vec<f64>>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateSection {
    /// Unit-mass profile used as the integrand.
    pub integrand: ProfileKind,
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub source: SourceSpec,
}

/// The full experiment file. Command sections are optional; the invoked
/// subcommand requires its own.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldSection,
    pub variogram: Variogram,
    pub window: WindowSection,
    pub shift_density: ShiftDensity,
    pub mc: McSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dehaan: Option<DehaanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrate: Option<IntegrateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSection>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> anyhow::Result<()> {
        FieldConfig::new(self.field.alpha, self.field.dim_d, self.field.dim_l, self.field.norm)?;
        self.shift_density.validate()?;
        if self.mc.workers == 0 {
            bail!("mc.workers must be at least 1");
        }
        if self.mc.n == 0 {
            bail!("mc.n must be at least 1");
        }
        Ok(())
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig::new(self.field.alpha, self.field.dim_d, self.field.dim_l, self.field.norm)
            .expect("checked at load")
    }

    pub fn model_context(&self) -> anyhow::Result<ModelContext> {
        let ctx = ModelContext {
            field: self.field_config(),
            variogram: self.variogram,
            jitter: shiftfield::gaussian::DEFAULT_JITTER,
            window: Window::new(self.window.half_width)?,
            step: self.window.step,
            shift_density: self.shift_density,
        };
        // Surface bad window/step combinations at load time.
        ctx.quadrature()?;
        Ok(ctx)
    }

    pub fn dehaan_config(&self) -> DeHaanConfig {
        let section = self.dehaan.clone().unwrap_or_default();
        DeHaanConfig {
            max_terms: section.max_terms,
            stop_quantile: section.stop_quantile,
            sup_bound_estimate: section.sup_bound_estimate,
        }
    }

    pub fn identity_spec(&self) -> anyhow::Result<IdentitySpec> {
        let section = self
            .verify
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("config lacks a [verify] section"))?;
        Ok(IdentitySpec {
            identity: section.identity,
            functional: section.functional.clone(),
            h: section.h.clone(),
            x: section.x,
            left: section.left.clone(),
            right: section.right.clone(),
            n: self.mc.n,
            confidence: section.confidence,
        })
    }
}
