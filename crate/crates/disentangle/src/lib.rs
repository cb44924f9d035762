//! Variational encoder/decoder whose latent code is split into a content
//! block `c` and a bias block `b`, plus the conditional-independence
//! regularizer that pushes `c ⊥ b | y`.
//!
//! The encoder maps `x` to means and log-variances of `z = [c; b]`; the
//! first `n_c` latent coordinates are the content block by convention.
//! Every loss in this crate comes with a hand-derived gradient so the
//! training loop can assemble the full objective without an autodiff graph.
//!
//! ```
//! use disentangle::independence_penalty;
//! use numkit::Matrix;
//!
//! let c = Matrix::from_vec(4, 1, vec![1.0, -1.0, 2.0, -2.0]).unwrap();
//! let b = Matrix::from_vec(4, 1, vec![1.0, 0.0, 3.0, 1.0]).unwrap();
//! let pen = independence_penalty(&c, &b, &[0, 0, 1, 1]).unwrap();
//! assert!((pen - 1.5625).abs() < 1e-15);
//! ```

mod error;
mod loss;
mod penalty;
mod vae;

pub use error::{DisentangleError, Result};
pub use loss::{kl_standard_normal, vae_loss, vae_loss_grad, VaeLossGrad};
pub use penalty::{
    class_residuals, cross_moment_penalty, independence_penalty, independence_penalty_grad,
    Pooling, PenaltyGrad,
};
pub use vae::{LatentBatch, LatentCode, VaeForward, VaeParams, LOGVAR_MAX, LOGVAR_MIN};
