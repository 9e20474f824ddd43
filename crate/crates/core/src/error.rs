use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates the documented domain of an operation.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The exponential action left the representable range.
    #[error("overflow: result norm exceeded {limit:e}")]
    Overflow { limit: f64 },

    #[error("no convergence after {iterations} iterations (last relative change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("time {0} is not on the panel grid")]
    MissingTime(f64),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
