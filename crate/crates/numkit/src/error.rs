use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    /// Operand shapes do not chain; the message names the operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    /// An argument lies outside the operation's domain.
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl NumError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Dimension { op, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, NumError>;
