use numkit::NumError;
use thiserror::Error;

/// Failures while estimating or applying a calibration.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("{pseudo} pseudo-labels for {truth} true labels")]
    LengthMismatch { pseudo: usize, truth: usize },
    #[error("no labels to calibrate on")]
    Empty,
    #[error("label {label} is outside 0..{classes}")]
    LabelRange { label: usize, classes: usize },
    #[error("class(es) {0:?} absent from the true labels")]
    AbsentClass(Vec<usize>),
    #[error(
        "pseudo-labels are not informative (h0 + h1 − 1 = {margin:.4} ≤ {threshold}); \
         skip the correction and use the uncorrected bias head"
    )]
    Uninformative { margin: f64, threshold: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(
        "simplex least squares did not converge in {iterations} iterations \
         (gradient-mapping norm {grad_norm:.3e}, residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, grad_norm: f64, residual: f64 },
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, CalibError>;
