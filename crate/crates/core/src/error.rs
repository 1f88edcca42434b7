use thiserror::Error;

/// Errors raised by samplers, functionals and the verification engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// Invalid configuration (bad parameter, failed normalization check,
    /// unknown descriptor).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation contract (e.g. path sites do not
    /// match the quadrature nodes).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Linear-algebra failure that survived jitter escalation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Every path in a resampling pool had zero tilting weight.
    #[error("degenerate tilting for base representor `{0}`: all pool weights are zero")]
    DegenerateTilting(String),

    /// A normalizing integral that must be positive evaluated to zero.
    /// The theory guarantees positivity, so this indicates that the
    /// quadrature window or step cannot resolve the field's support.
    #[error("positivity violation: {0} (truncation/discretization failure: widen the window or refine the step)")]
    PositivityViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
