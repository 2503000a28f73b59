//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: dimension mismatches, schema violations, out-of-range
    /// parameters, unknown names.
    #[error("validation: {0}")]
    Validation(String),

    /// A computation left the representable range (overflow in `exp`,
    /// non-finite intermediate, ...). Carries enough context to locate
    /// the failing layer/position.
    #[error("numeric range: {0}")]
    Numeric(String),

    /// Malformed file contents (manifests, presets, checkpoints).
    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
