use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A covariance could not be factorized even after the maximum jitter,
    /// or an innovation covariance was not positive definite.
    #[error("numerical divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn numerical(reason: impl Into<String>) -> Self {
        Error::Divergence { step: 0, reason: reason.into() }
    }

    /// Attach the filter step to a divergence raised by a step-agnostic helper.
    pub(crate) fn at_step(self, k: usize) -> Self {
        match self {
            Error::Divergence { reason, .. } => Error::Divergence { step: k, reason },
            other => other,
        }
    }
}
