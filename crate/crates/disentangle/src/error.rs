use numkit::NumError;
use thiserror::Error;

/// Failures of the disentangling objectives.
#[derive(Debug, Error)]
pub enum DisentangleError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("{0} needs a non-empty batch")]
    EmptyBatch(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, DisentangleError>;

pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> DisentangleError {
    DisentangleError::Dimension { op, detail: detail.into() }
}
