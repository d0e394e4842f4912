use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("phoneset mismatch: {0}")]
    Phoneset(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no threshold reaches target precision {target}")]
    CalibrationInfeasible { target: f64 },

    #[error("metric update rejected after {halvings} step-size halvings")]
    BacktrackExhausted { halvings: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
