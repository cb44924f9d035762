use numkit::clip_prob;

use crate::error::{CalibError, Result};
use crate::multiclass::tally;

/// Minimum `h0 + h1 − 1` for which the binary correction is applied.
pub const DELTA_MARGIN: f64 = 0.05;

/// Bound on the magnitude of [`phi`]'s output log-odds.
///
/// The log-odds correction is exact wherever the corrected probability lies
/// inside `(0, 1)`. Beyond that it saturates at this value instead of
/// clipping the probability, so the identity calibration stays the exact
/// identity on logits.
pub const PHI_LIMIT: f64 = 40.0;

/// Class-conditional pseudo-label accuracy on two classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryCalib {
    /// `P(ŷ = 0 | y = 0)`.
    pub h0: f64,
    /// `P(ŷ = 1 | y = 1)`.
    pub h1: f64,
    /// `counts[ŷ][y]`, raw (unsmoothed) tallies.
    pub counts: [[u64; 2]; 2],
}

impl BinaryCalib {
    /// A calibration with the given rates and no supporting counts.
    pub fn from_rates(h0: f64, h1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&h0) || !(0.0..=1.0).contains(&h1) {
            return Err(CalibError::Invalid(format!("rates ({h0}, {h1}) outside [0, 1]")));
        }
        Ok(BinaryCalib { h0, h1, counts: [[0; 2]; 2] })
    }

    /// `h0 + h1 − 1`; zero exactly when pseudo-labels carry no information.
    pub fn margin(&self) -> f64 {
        self.h0 + self.h1 - 1.0
    }
}

/// Add-one smoothed `h_c = (#{ŷ=c, y=c} + 1) / (#{y=c} + 2)`.
pub fn estimate_binary(pseudo: &[usize], truth: &[usize]) -> Result<BinaryCalib> {
    let t = tally(pseudo, truth, 2)?;
    let counts = [[t[0][0], t[0][1]], [t[1][0], t[1][1]]];
    let n0 = counts[0][0] + counts[1][0];
    let n1 = counts[0][1] + counts[1][1];
    Ok(BinaryCalib {
        h0: (counts[0][0] + 1) as f64 / (n0 + 2) as f64,
        h1: (counts[1][1] + 1) as f64 / (n1 + 2) as f64,
        counts,
    })
}

/// `(h0 + h1 > 1 + DELTA_MARGIN, h0 + h1 − 1)`.
pub fn check_informative(calib: &BinaryCalib) -> (bool, f64) {
    let m = calib.margin();
    (m > DELTA_MARGIN, m)
}

fn require_informative(calib: &BinaryCalib) -> Result<f64> {
    match check_informative(calib) {
        (true, m) => Ok(m),
        (false, margin) => Err(CalibError::Uninformative { margin, threshold: DELTA_MARGIN }),
    }
}

/// `P(ŷ = 1)` implied by `P(y = 1) = p`: `h1·p + (1 − h0)·(1 − p)`.
pub fn mix_binary(p: f64, calib: &BinaryCalib) -> f64 {
    calib.h1 * p + (1.0 - calib.h0) * (1.0 - p)
}

/// The unclipped inverse of [`mix_binary`]: `(p̂ + h0 − 1) / (h0 + h1 − 1)`.
pub fn correct_binary_raw(p_hat: f64, calib: &BinaryCalib) -> Result<f64> {
    let d = require_informative(calib)?;
    Ok((p_hat + calib.h0 - 1.0) / d)
}

/// Corrected `P(y = 1 | b)` from the pseudo-label estimate `p̂ = P(ŷ = 1 | b)`,
/// clipped into `[EPS_CLIP, 1 − EPS_CLIP]`.
pub fn correct_binary(p_hat: f64, calib: &BinaryCalib) -> Result<f64> {
    Ok(clip_prob(correct_binary_raw(p_hat, calib)?))
}

/// `ln1p(−rate·scale)`, treating a zero rate as exactly zero even when
/// `scale` overflows.
fn log_keep(rate: f64, scale: f64) -> Option<f64> {
    if rate == 0.0 {
        return Some(0.0);
    }
    let x = rate * scale;
    (x < 1.0).then(|| (-x).ln_1p())
}

/// The correction in log-odds: `φ(l) = logit(correct_binary(σ(l)))`.
///
/// Evaluated as `l + ln(1 − (1−h0)(1+e^{−l})) − ln(1 − (1−h1)(1+e^{l}))`,
/// which never forms `σ(l)` and is therefore exact for large `|l|`. Where
/// the corrected probability falls outside `(0, 1)` the result saturates at
/// `∓PHI_LIMIT`; the output is always clamped to `[−PHI_LIMIT, PHI_LIMIT]`.
pub fn phi(logit_val: f64, calib: &BinaryCalib) -> Result<f64> {
    require_informative(calib)?;
    if logit_val.is_nan() {
        return Err(CalibError::Invalid("phi of NaN".into()));
    }
    let a = 1.0 - calib.h0;
    let b = 1.0 - calib.h1;
    let lo = log_keep(a, 1.0 + (-logit_val).exp());
    let hi = log_keep(b, 1.0 + logit_val.exp());
    let out = match (lo, hi) {
        (None, _) => -PHI_LIMIT,
        (_, None) => PHI_LIMIT,
        (Some(l), Some(h)) => logit_val + l - h,
    };
    Ok(out.clamp(-PHI_LIMIT, PHI_LIMIT))
}
