//! Stage 2 of the method: adapting the bias-aware head to an unlabelled
//! target domain.
//!
//! 1. [`pseudo_label`]: the invariant head labels the target data. It is
//!    trusted because its input distribution does not move across domains.
//! 2. [`tta_finetune`]: only `f_b` (domain classifier, domain embeddings
//!    and experts) is refitted to the pseudo-labels. The encoder, decoder,
//!    `f_c` and `Pr` stay frozen; [`BagModel::frozen_hash`] makes that
//!    checkable.
//! 3. [`final_predict`]: the refitted head estimates `P(ŷ | b)`. It is
//!    mapped back to `P(y | b)` with the source-estimated calibration,
//!    then combined with `f_c` and `Pr` exactly as in Stage 1.
//!
//! [`adapt`] chains the three steps and returns an [`AdaptReport`].

mod error;
mod model;
mod tta;

pub use error::{AdaptError, Result};
pub use model::{BagModel, Calibration};
pub use tta::{
    adapt, ada_loss, final_predict, pseudo_label, tta_finetune, AdaptConfig, AdaptReport, BiasTrainable,
    CorrectionMode, FinalPrediction, TtaOptimizer,
};
