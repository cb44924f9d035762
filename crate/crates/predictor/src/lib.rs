//! The decomposed classifier `f(z) = f_b(b) + f_c(c) − Pr`.
//!
//! - `f_c` reads the content block and is meant to be environment-invariant.
//! - `Pr` is a learnable vector of prior logits, subtracted once so the label
//!   prior is not counted twice.
//! - `f_b` is a mixture of per-environment experts weighted by a domain
//!   classifier `p(e | b)` over learnable domain embeddings.
//!
//! The experts mix in probability space. The mixture is then moved to the
//! log domain and added to the other two terms:
//!
//! ```text
//! p(y | c, b) ∝ p(y | b) · p(y | c) / p(y)
//! ```
//!
//! For two classes this is `σ(logit p(y=1|b) + logit p(y=1|c) − logit p(y=1))`
//! ([`combine_binary`]); for `K` classes it is the normalised product ratio
//! ([`combine_multiclass`]). Both are exact whenever `c ⊥ b | y`.
//!
//! Training runs entirely in log space ([`DecomposedHead::forward`] /
//! [`DecomposedHead::backward`]) so no probability is ever clipped inside a
//! gradient.

mod bias;
mod combine;
mod error;
mod head;

pub use bias::{BiasForward, BiasHead};
pub use combine::{
    clip_simplex, combine_binary, combine_log, combine_log_backward, combine_multiclass,
    expected_kl, kl_optimal_mixture, nll_loss, CombineGrad,
};
pub use error::{PredictorError, Result};
pub use head::{DecomposedHead, HeadForward, HeadGrads, HeadUpstream, PredictionBundle};
