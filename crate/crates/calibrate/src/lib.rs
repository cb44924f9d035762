//! Pseudo-label calibration and the corrections that undo pseudo-label noise.
//!
//! A head trained on pseudo-labels `ŷ` estimates `P(ŷ | b)`, not `P(y | b)`.
//! When the pseudo-labeler's errors depend only on the true class, the two
//! are linked by the class-conditional confusion rates.
//!
//! In the binary case, with `h0 = P(ŷ=0 | y=0)` and `h1 = P(ŷ=1 | y=1)`:
//!
//! ```text
//! P(ŷ=1 | b) = h1·P(y=1 | b) + (1 − h0)·(1 − P(y=1 | b))
//! ```
//!
//! This is inverted in closed form by [`correct_binary`], or in log-odds by
//! [`phi`].
//!
//! With `K` classes, the link is `E[ŷ | b] = ε·P(y | b)` for the confusion
//! matrix `ε`. [`correct_multiclass`] solves it by least squares over the
//! probability simplex.
//!
//! All rates are estimated with add-one smoothing, so no estimate is
//! exactly 0 or 1.
//!
//! ```
//! use calibrate::{correct_binary, estimate_binary};
//!
//! let truth = [0, 0, 0, 0, 1, 1, 1, 1];
//! let pseudo = [0, 0, 0, 1, 1, 1, 1, 0];
//! let calib = estimate_binary(&pseudo, &truth).unwrap();
//! assert_eq!((calib.h0, calib.h1), (4.0 / 6.0, 4.0 / 6.0));
//! let p = correct_binary(0.5, &calib).unwrap();
//! assert!((p - 0.5).abs() < 1e-15);
//! ```

mod binary;
mod error;
mod multiclass;

pub use binary::{
    check_informative, correct_binary, correct_binary_raw, estimate_binary, mix_binary, phi, BinaryCalib,
    DELTA_MARGIN, PHI_LIMIT,
};
pub use error::{CalibError, Result};
pub use multiclass::{
    correct_multiclass, estimate_confusion, project_simplex, simplex_objective, solve_simplex_ls, ConfusionMatrix,
    SimplexSolution, LS_MAX_ITER, LS_TOL,
};
