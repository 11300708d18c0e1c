use thiserror::Error;

/// Errors raised by kernels, targets, samplers and the analytic layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is numerically singular (smallest singular value {smallest_singular_value:e})")]
    Singular { smallest_singular_value: f64 },

    #[error("non-finite value produced at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("covariance lost positive definiteness at t = {time}")]
    NotPositiveDefinite { time: f64 },

    #[error("matrix `{name}` is not symmetric positive definite")]
    NotSpd { name: &'static str },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bandwidth undefined: all particles coincide")]
    DegenerateBandwidth,

    #[error("unknown {kind} `{name}`; valid names: {}", valid.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: Vec<&'static str>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}
