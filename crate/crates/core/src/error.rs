use std::io;

use thiserror::Error;

/// Errors produced by the estimators, the density catalogue and the I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input for `{0}`")]
    NonFinite(&'static str),

    #[error("point {value} lies outside the domain [{low}, {high}]")]
    OutOfDomain { value: f64, low: f64, high: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("sample is constant in dimension {0}")]
    DegenerateSample(usize),

    #[error("bandwidth {0} must lie in (0, 1) to back out a smoothness")]
    InvalidBandwidth(f64),

    #[error("unknown density id `{0}`")]
    UnknownDensity(String),

    #[error("curves are evaluated on different level grids")]
    GridMismatch,

    #[error("exponential correction overflows: {0}")]
    Overflow(String),

    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}
