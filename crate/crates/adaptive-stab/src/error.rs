use thiserror::Error;

/// Errors raised by the library. Variants map one-to-one onto the CLI exit-code taxonomy.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke an operation precondition (dimension mismatch, non-positive radius, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Invalid or inconsistent configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// A certification step came back negative.
    #[error("not certified: {0}")]
    NotCertified(String),
    /// A required input (certificate, schedule) is missing.
    #[error("missing prerequisite: {0}")]
    Missing(String),
    /// Numerical failure that should not happen for valid inputs.
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
