//! The uniform sampling interface: every field construction exposes
//! "prepare once for a site set, then draw weighted joint realizations".

use crate::error::Result;
use crate::field::{FieldConfig, PathSample, PointSet};
use crate::stream::{DrawDiag, Stream};

/// One weighted realization. `weight` is 1 except for
/// importance-weighted tilting, where expectations under the tilted law
/// are estimated as plain means of `weight * functional(path)`.
#[derive(Debug, Clone)]
pub struct Draw {
    pub path: PathSample,
    pub weight: f64,
    pub diag: DrawDiag,
}

pub trait PathSource: Send + Sync {
    fn cfg(&self) -> &FieldConfig;

    /// Short human-readable tag for error messages.
    fn label(&self) -> String;

    /// True when the norm of the value at the origin is 1 on every draw
    /// (pinned constructions). Exact tilting relies on this.
    fn unit_origin_norm(&self) -> bool {
        false
    }

    fn prepare(&self, sites: &PointSet) -> Result<Box<dyn PreparedSource>>;

    /// Pre-run diagnostic gate. Sources whose construction assumes a
    /// regime (finite alpha-mass on the window) verify it on a pilot and
    /// return the diagnostic for the report; the default has nothing to
    /// check.
    fn preflight(
        &self,
        _master_seed: u64,
        _pool: &rayon::ThreadPool,
    ) -> Result<Option<serde_json::Value>> {
        Ok(None)
    }
}

pub trait PreparedSource: Send + Sync {
    fn draw(&self, rng: &mut Stream) -> Result<Draw>;
}

/// Prepare-and-draw convenience for one-off sampling.
pub fn draw_once(
    source: &dyn PathSource,
    sites: &PointSet,
    rng: &mut Stream,
) -> Result<Draw> {
    source.prepare(sites)?.draw(rng)
}
