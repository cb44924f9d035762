use numkit::Matrix;

use crate::error::{dim, DisentangleError, Result};
use crate::vae::LatentBatch;

/// Closed-form `KL(N(mean, diag exp(logvar)) ‖ N(0, I))`.
pub fn kl_standard_normal(mean: &[f64], logvar: &[f64]) -> f64 {
    mean.iter().zip(logvar).map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv)).sum()
}

/// Value and input gradients of [`vae_loss`].
#[derive(Debug, Clone)]
pub struct VaeLossGrad {
    pub value: f64,
    pub d_xhat: Matrix,
    pub d_mean: Matrix,
    pub d_logvar: Matrix,
}

fn check(x: &Matrix, x_hat: &Matrix, latents: &LatentBatch) -> Result<()> {
    if x.shape() != x_hat.shape() {
        return Err(dim("vae_loss", format!("X {:?} vs X̂ {:?}", x.shape(), x_hat.shape())));
    }
    if latents.len() != x.rows() {
        return Err(dim("vae_loss", format!("{} codes for {} rows", latents.len(), x.rows())));
    }
    if x.rows() == 0 {
        return Err(DisentangleError::EmptyBatch("vae_loss"));
    }
    Ok(())
}

/// Batch mean of `‖x − x̂‖² + β·KL(q(z|x) ‖ N(0, I))`.
pub fn vae_loss(x: &Matrix, x_hat: &Matrix, latents: &LatentBatch, beta: f64) -> Result<f64> {
    check(x, x_hat, latents)?;
    let n = x.rows();
    let mut total = 0.0;
    for i in 0..n {
        let rec: f64 = x.row(i).iter().zip(x_hat.row(i)).map(|(a, b)| (a - b) * (a - b)).sum();
        total += rec + beta * kl_standard_normal(latents.mean().row(i), latents.logvar().row(i));
    }
    let value = total / n as f64;
    if !value.is_finite() {
        return Err(DisentangleError::NonFinite("vae_loss"));
    }
    Ok(value)
}

/// [`vae_loss`] together with its derivatives with respect to `x̂` and the
/// posterior means and log-variances.
pub fn vae_loss_grad(x: &Matrix, x_hat: &Matrix, latents: &LatentBatch, beta: f64) -> Result<VaeLossGrad> {
    let value = vae_loss(x, x_hat, latents, beta)?;
    let inv_n = 1.0 / x.rows() as f64;
    let mut d_xhat = x_hat.clone();
    d_xhat.axpy(-1.0, x)?;
    d_xhat.scale(2.0 * inv_n);
    let d_mean = latents.mean().map(|m| beta * m * inv_n);
    let d_logvar = latents.logvar().map(|lv| beta * 0.5 * (lv.exp() - 1.0) * inv_n);
    Ok(VaeLossGrad { value, d_xhat, d_mean, d_logvar })
}
