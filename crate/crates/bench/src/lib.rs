//! Shared fixtures for the benchmark suite.

use shiftfield::*;

pub fn line_context(theta: f64, half_width: f64) -> ModelContext {
    ModelContext {
        field: FieldConfig::scalar_line(1.0),
        variogram: Variogram::fractional(theta, 0.5).unwrap(),
        jitter: 1e-10,
        window: Window::new(half_width).unwrap(),
        step: 0.25,
        shift_density: ShiftDensity::Gaussian { sigma: 2.0 },
    }
}

pub fn grid_sites(ctx: &ModelContext) -> PointSet {
    ctx.quadrature().unwrap().nodes()
}
