use crate::error::{NumError, Result};

/// Compare an analytic gradient with central finite differences.
///
/// `f(θ)` returns `(loss, ∂loss/∂θ)`. The result is
/// `max_i |analytic_i − numeric_i| / max(1, |analytic_i|, |numeric_i|)`.
pub fn grad_check<F>(mut f: F, theta: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (loss, grad) = f(theta)?;
    if !loss.is_finite() {
        return Err(NumError::NonFinite { what: "loss at the check point".into() });
    }
    if grad.len() != theta.len() {
        return Err(NumError::Dimension {
            op: "grad_check",
            detail: format!("{} gradient entries for {} parameters", grad.len(), theta.len()),
        });
    }
    grad_check_with(|t| f(t).map(|(l, _)| l), &grad, theta, step)
}

/// Like [`grad_check`] with the analytic gradient supplied up front.
pub fn grad_check_with<F>(mut loss: F, analytic: &[f64], theta: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(NumError::Invalid(format!("finite-difference step {step} must be positive")));
    }
    let mut work = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        work[i] = theta[i] + step;
        let up = loss(&work)?;
        work[i] = theta[i] - step;
        let down = loss(&work)?;
        work[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(NumError::NonFinite { what: format!("loss near coordinate {i}") });
        }
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
