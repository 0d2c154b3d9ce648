use coherence_sdp::{SdpError, Status};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoherenceError {
    /// Malformed or out-of-range input.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("solver returned {status:?}: {context}")]
    Solver { status: Status, context: String },
    /// Measured data admits no density matrix.
    #[error("observations are inconsistent with every quantum state")]
    InfeasibleData,
    #[error("value {value} lies outside the spectrum [{lo}, {hi}] of the observable")]
    InconsistentData { value: f64, lo: f64, hi: f64 },
    #[error("observable is fully degenerate")]
    DegenerateObservable,
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<SdpError> for CoherenceError {
    fn from(e: SdpError) -> Self {
        match e {
            SdpError::InvalidProblem(m) => CoherenceError::Validation(m),
            SdpError::Numerical(m) => CoherenceError::Numerical(m),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoherenceError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoherenceError::Validation(msg.into()))
}
