use std::path::PathBuf;

use thiserror::Error;

/// Failures of the training, evaluation and persistence layer.
///
/// Each variant maps onto one CLI exit code via [`BenchError::exit_code`].
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64, trace: Vec<f64> },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("dataset error: {0}")]
    Data(#[from] scm::ScmError),
    #[error(transparent)]
    Adapt(#[from] adapt::AdaptError),
}

impl BenchError {
    /// Process exit code: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Data(scm::ScmError::Config(_)) => 2,
            BenchError::Numeric(_) | BenchError::Diverged { .. } | BenchError::Adapt(_) => 3,
            BenchError::Data(scm::ScmError::Num(_)) => 3,
            BenchError::Io { .. } | BenchError::Checkpoint { .. } | BenchError::Data(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io { path: path.into(), source }
    }
}

macro_rules! numeric_from {
    ($($t:ty),*) => {$(
        impl From<$t> for BenchError {
            fn from(e: $t) -> Self {
                BenchError::Numeric(e.to_string())
            }
        }
    )*};
}

numeric_from!(numkit::NumError, disentangle::DisentangleError, predictor::PredictorError, calibrate::CalibError);

pub type Result<T> = std::result::Result<T, BenchError>;
