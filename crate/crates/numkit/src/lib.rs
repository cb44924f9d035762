//! Minimal deterministic numerical core.
//!
//! Everything else in the workspace is built on the handful of pieces here:
//!
//! - [`Matrix`]: a row-major dense `f64` matrix with the few products training needs.
//! - [`Mlp`]: fixed-architecture feed-forward nets with hand-derived backward passes.
//! - [`Adam`]: the bias-corrected adaptive-moment optimizer.
//! - [`grad_check`]: a central finite-difference oracle for every analytic gradient.
//! - [`Rng`]: a counter-based (ChaCha) generator with independent named streams.
//! - [`par`]: data-parallel helpers that fall back to sequential loops when the
//!   `parallel` feature is disabled. Both paths produce bit-identical results.

mod activation;
mod error;
mod gradcheck;
mod matrix;
mod mlp;
mod optim;
pub mod par;
mod probe;
mod params;
mod rng;

pub use activation::{
    clip_prob, log_softmax_rows, log_softmax_rows_backward, log_softmax_vec, logit, logsumexp,
    sigmoid, softmax_rows, softmax_vec, Activation, EPS_CLIP,
};
pub use error::{NumError, Result};
pub use gradcheck::{grad_check, grad_check_with};
pub use matrix::Matrix;
pub use mlp::{Layer, Mlp, MlpCache, MlpGrads};
pub use optim::{Adam, AdamConfig, Sgd};
pub use probe::LinearProbe;
pub use params::{flatten, assign, num_params, Parameterized};
pub use rng::Rng;
