use crate::error::{NumError, Result};
use crate::matrix::Matrix;

/// Probability clipping constant applied at every probability → logit boundary.
pub const EPS_CLIP: f64 = 1e-7;

/// Point-wise (or, for softmax, row-wise) layer non-linearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax; only valid as the final layer's activation.
    Softmax,
}

impl Activation {
    /// Stable lower-case tag used in checkpoints.
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    /// Inverse of [`Activation::name`].
    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }

    /// Apply to a matrix of pre-activations.
    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.map(|x| x.max(0.0)),
            Activation::Tanh => z.map(f64::tanh),
            Activation::Sigmoid => z.map(|x| 1.0 / (1.0 + (-x).exp())),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Map an upstream gradient w.r.t. the activation output `a = act(z)` to
    /// a gradient w.r.t. `z`.
    pub fn backward(self, z: &Matrix, a: &Matrix, upstream: &Matrix) -> Matrix {
        match self {
            Activation::Identity => upstream.clone(),
            Activation::Relu => {
                let mut g = upstream.clone();
                for (gi, &zi) in g.data_mut().iter_mut().zip(z.data()) {
                    if zi <= 0.0 {
                        *gi = 0.0;
                    }
                }
                g
            }
            Activation::Tanh => {
                let mut g = upstream.clone();
                for (gi, &ai) in g.data_mut().iter_mut().zip(a.data()) {
                    *gi *= 1.0 - ai * ai;
                }
                g
            }
            Activation::Sigmoid => {
                let mut g = upstream.clone();
                for (gi, &ai) in g.data_mut().iter_mut().zip(a.data()) {
                    *gi *= ai * (1.0 - ai);
                }
                g
            }
            Activation::Softmax => {
                // dz_j = a_j (g_j − Σ_k g_k a_k)
                let mut g = upstream.clone();
                for i in 0..g.rows() {
                    let arow = a.row(i);
                    let s: f64 = g.row(i).iter().zip(arow).map(|(x, y)| x * y).sum();
                    for (gj, &aj) in g.row_mut(i).iter_mut().zip(arow) {
                        *gj = aj * (*gj - s);
                    }
                }
                g
            }
        }
    }
}

/// Logistic sigmoid, kept strictly inside (0, 1).
///
/// Evaluated in the numerically stable branch for each sign of `l`.
pub fn sigmoid(l: f64) -> f64 {
    let p = if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Clip a probability into `[EPS_CLIP, 1 − EPS_CLIP]`.
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

/// Log-odds `ln(p / (1 − p))`, accurate for small `p`.
///
/// Fails for `p` outside the open unit interval (NaN included).
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumError::Invalid(format!("logit of {p} outside (0, 1)")));
    }
    Ok(p.ln() - (-p).ln_1p())
}

/// `ln Σ exp(x_i)` with the max-shift; `-inf` for an empty slice.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of a vector.
pub fn softmax_vec(x: &[f64]) -> Vec<f64> {
    let lse = logsumexp(x);
    x.iter().map(|&v| (v - lse).exp()).collect()
}

/// Log-softmax of a vector.
pub fn log_softmax_vec(x: &[f64]) -> Vec<f64> {
    let lse = logsumexp(x);
    x.iter().map(|&v| v - lse).collect()
}

/// Row-wise softmax.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..z.rows() {
        let s = softmax_vec(z.row(i));
        out.row_mut(i).copy_from_slice(&s);
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..z.rows() {
        let s = log_softmax_vec(z.row(i));
        out.row_mut(i).copy_from_slice(&s);
    }
    out
}

/// Gradient through a row-wise log-softmax: `dz = g − softmax(z) · Σ g`.
///
/// `ls` is the log-softmax output of the forward pass.
pub fn log_softmax_rows_backward(ls: &Matrix, upstream: &Matrix) -> Matrix {
    let mut g = upstream.clone();
    for i in 0..g.rows() {
        let total: f64 = upstream.row(i).iter().sum();
        for (gj, &lj) in g.row_mut(i).iter_mut().zip(ls.row(i)) {
            *gj -= lj.exp() * total;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_logit_fixed_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert!((logit(sigmoid(3.7)).unwrap() - 3.7).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_never_hits_endpoints() {
        for l in [-1e4, -800.0, 800.0, 1e4] {
            let p = sigmoid(l);
            assert!(p > 0.0 && p < 1.0);
            assert!(logit(p).is_ok());
        }
    }

    #[test]
    fn logit_rejects_out_of_range() {
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
        assert!(logit(f64::NAN).is_err());
    }

    #[test]
    fn softmax_on_zero_logits_is_uniform() {
        let s = softmax_vec(&[0.0, 0.0, 0.0]);
        for p in s {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn activation_names_round_trip() {
        for a in [
            Activation::Identity,
            Activation::Relu,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Softmax,
        ] {
            assert_eq!(Activation::from_name(a.name()), Some(a));
        }
    }
}
