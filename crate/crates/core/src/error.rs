use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpadeError {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("quadrature did not converge: refinement changed the result by {achieved:.3e} (tolerance {tolerance:.1e})")]
    QuadratureNotConverged { achieved: f64, tolerance: f64 },

    #[error("numerical health check failed: {0}")]
    NumericalHealth(String),

    #[error(
        "Fisher information vanishes; the separation is not identifiable (unbounded uncertainty)"
    )]
    UnboundedUncertainty,

    #[error(
        "crossover regime (x = {x}, amplitude = {amplitude}); use the full Fisher information"
    )]
    CrossoverRegime { x: f64, amplitude: f64 },
}

impl SpadeError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        SpadeError::InvalidInput {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SpadeError>;

pub(crate) fn ensure_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(SpadeError::invalid(
            field,
            format!("must be finite, got {value}"),
        ))
    }
}
