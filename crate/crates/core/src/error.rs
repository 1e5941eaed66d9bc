use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: wrong shapes, out-of-range indices, non-finite values.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration value breaks one of the environment's inequalities.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// Numerical failure during training (non-finite loss or gradient).
    #[error("training error: {0}")]
    Training(String),

    /// An API was used out of order, e.g. stepping a finished episode.
    #[error("usage error: {0}")]
    Usage(String),

    /// The requested operation is not available for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A text artifact could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
