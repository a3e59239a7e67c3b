use thiserror::Error;

use crate::model::RegimeTag;

pub type Result<T> = std::result::Result<T, CtError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("density must be positive, got {0}")]
    NonpositiveDensity(f64),

    #[error("s must be positive, got {0}")]
    NonpositiveS(f64),

    #[error("mass must be positive, got {0}")]
    NonpositiveMass(f64),

    #[error("operation requires {expected:?} damping, parameters are {actual:?}")]
    RegimeMismatch {
        expected: RegimeTag,
        actual: RegimeTag,
    },

    #[error("integrator could not leave the origin seed band (s = {s})")]
    SingularityStall { s: f64 },

    #[error("s = {s} lies outside the curve range [0, {s_max}]")]
    CurveRangeExceeded { s: f64, s_max: f64 },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepFailure { t: f64, h: f64 },

    #[error("too close to the threshold to decide (s_min = {s_min})")]
    Inconclusive { s_min: f64 },

    #[error("tail estimate {estimate:e} exceeds quadrature tolerance {quad_tol:e}")]
    TailTooHeavy { estimate: f64, quad_tol: f64 },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CtError {
    fn from(e: std::io::Error) -> Self {
        CtError::Io(e.to_string())
    }
}

impl From<csv::Error> for CtError {
    fn from(e: csv::Error) -> Self {
        CtError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for CtError {
    fn from(e: serde_json::Error) -> Self {
        CtError::Parse(e.to_string())
    }
}

impl CtError {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            CtError::InvalidParams(_)
                | CtError::NonpositiveDensity(_)
                | CtError::NonpositiveS(_)
                | CtError::NonpositiveMass(_)
                | CtError::RegimeMismatch { .. }
                | CtError::CurveRangeExceeded { .. }
                | CtError::InvalidField(_)
                | CtError::Parse(_)
                | CtError::Io(_)
        )
    }
}
