use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure in {what} (after {iterations} iterations)")]
    NumericalFailure { what: String, iterations: usize },

    #[error("training diverged at step {step}: {reason}")]
    TrainingFailure { step: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::InvalidDimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub(crate) fn numerical(what: impl Into<String>, iterations: usize) -> Self {
        Error::NumericalFailure {
            what: what.into(),
            iterations,
        }
    }
}
