use numkit::NumError;
use thiserror::Error;

/// Failures of the decomposed classifier.
#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("expert index {index} out of range for {count} experts")]
    ExpertIndex { index: usize, count: usize },
    #[error("invalid distribution in {op}: {detail}")]
    Distribution { op: &'static str, detail: String },
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, PredictorError>;

pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> PredictorError {
    PredictorError::Dimension { op, detail: detail.into() }
}
