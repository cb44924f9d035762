use thiserror::Error;

/// Failures during adaptation.
#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("model components disagree: {0}")]
    Inconsistent(String),
    #[error("adaptation loss became non-finite at epoch {epoch} (trace so far: {trace:?})")]
    Diverged { epoch: usize, trace: Vec<f64> },
    #[error("invalid adaptation input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Num(#[from] numkit::NumError),
    #[error(transparent)]
    Latent(#[from] disentangle::DisentangleError),
    #[error(transparent)]
    Head(#[from] predictor::PredictorError),
    #[error(transparent)]
    Calib(#[from] calibrate::CalibError),
}

pub type Result<T> = std::result::Result<T, AdaptError>;
