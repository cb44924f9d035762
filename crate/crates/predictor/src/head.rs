use numkit::{log_softmax_rows, softmax_vec, Activation, Matrix, Mlp, MlpCache, Parameterized, Rng};

use crate::bias::{BiasForward, BiasHead};
use crate::combine::{clip_simplex, combine_log, combine_log_backward, combine_multiclass};
use crate::error::{dim, PredictorError, Result};

/// Invariant head `f_c`, prior logits `Pr` and bias-aware head `f_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedHead {
    /// `n_c → K` logits.
    pub f_c: Mlp,
    /// Learnable `logit p(y)` (up to a shared constant), length `K`.
    pub prior_logits: Vec<f64>,
    /// Mixture of per-domain experts.
    pub bias: BiasHead,
}

/// Batch predictions with every intermediate distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    /// `f_c(c)`, `n × K`.
    pub inv_logits: Matrix,
    /// Clipped `f_b(b)` mixture, `n × K`.
    pub bias_probs: Matrix,
    /// Clipped `p(e | b)`, `n × M`.
    pub domain_weights: Matrix,
    /// `p(y | c, b)`, `n × K`.
    pub combined_probs: Matrix,
}

/// Forward state for training.
#[derive(Debug, Clone)]
pub struct HeadForward {
    pub bias: BiasForward,
    pub inv_logits: Matrix,
    /// Normalised `log p(y | c, b)`, `n × K`.
    pub log_combined: Matrix,
    fc_cache: MlpCache,
}

/// Loss derivatives flowing into the head. Every field is optional so a
/// caller only supplies the terms its objective uses.
#[derive(Debug, Clone, Default)]
pub struct HeadUpstream {
    /// `∂L/∂log p(y | c, b)`.
    pub d_log_combined: Option<Matrix>,
    /// Direct `∂L/∂log q` (e.g. an auxiliary loss on the bias mixture).
    pub d_log_q: Option<Matrix>,
    /// Direct `∂L/∂log p(e | b)` (domain-classification loss).
    pub d_log_w: Option<Matrix>,
    /// Direct `∂L/∂f_c(c)` (auxiliary invariant-head loss).
    pub d_inv_logits: Option<Matrix>,
    /// Direct `∂L/∂Pr` (auxiliary prior loss).
    pub d_prior_logits: Option<Vec<f64>>,
}

/// Parameter gradients together with the gradients of the latent inputs.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub params: DecomposedHead,
    pub d_c: Matrix,
    pub d_b: Matrix,
}

impl DecomposedHead {
    /// Check that every component agrees on `K`.
    pub fn new(f_c: Mlp, prior_logits: Vec<f64>, bias: BiasHead) -> Result<Self> {
        let k = f_c.output_dim();
        if prior_logits.len() != k || bias.n_classes() != k {
            return Err(dim(
                "DecomposedHead::new",
                format!("f_c emits {k}, prior has {}, experts emit {}", prior_logits.len(), bias.n_classes()),
            ));
        }
        Ok(DecomposedHead { f_c, prior_logits, bias })
    }

    /// Single linear layers everywhere, zero prior logits.
    pub fn init(n_c: usize, n_b: usize, n_classes: usize, n_domains: usize, d_e: usize, rng: &mut Rng) -> Result<Self> {
        let f_c = Mlp::init(&[n_c, n_classes], &[Activation::Identity], rng)?;
        let bias = BiasHead::init(n_b, n_classes, n_domains, d_e, rng)?;
        Self::new(f_c, vec![0.0; n_classes], bias)
    }

    /// Set `Pr` to the log class frequencies of `labels`.
    pub fn set_prior_from_labels(&mut self, labels: &[usize]) -> Result<()> {
        let k = self.n_classes();
        let mut counts = vec![0usize; k];
        for &y in labels {
            *counts.get_mut(y).ok_or_else(|| dim("set_prior_from_labels", format!("label {y} with {k} classes")))? += 1;
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(PredictorError::Distribution {
                op: "set_prior_from_labels",
                detail: format!("class {missing} has no samples"),
            });
        }
        let n = labels.len() as f64;
        self.prior_logits = counts.iter().map(|&c| (c as f64 / n).ln()).collect();
        Ok(())
    }

    pub fn n_c(&self) -> usize {
        self.f_c.input_dim()
    }

    pub fn n_b(&self) -> usize {
        self.bias.n_b()
    }

    pub fn n_classes(&self) -> usize {
        self.prior_logits.len()
    }

    pub fn n_domains(&self) -> usize {
        self.bias.n_domains()
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        DecomposedHead {
            f_c: self.f_c.zeros_like(),
            prior_logits: vec![0.0; self.n_classes()],
            bias: self.bias.zeros_like(),
        }
    }

    /// `f_c(c)`, `n × K`.
    pub fn invariant_logits(&self, c: &Matrix) -> Result<Matrix> {
        if c.cols() != self.n_c() {
            return Err(dim("invariant_logits", format!("c has {} columns, expected {}", c.cols(), self.n_c())));
        }
        Ok(self.f_c.predict(c)?)
    }

    /// `p(e | b)`, `n × M`.
    pub fn domain_posterior(&self, b: &Matrix) -> Result<Matrix> {
        self.bias.domain_posterior(b)
    }

    /// `p(y | b, e = e_i)`, `n × K`.
    pub fn expert_probs(&self, b: &Matrix, i: usize) -> Result<Matrix> {
        self.bias.expert_probs(b, i)
    }

    /// The clipped bias-aware mixture `f_b(b)`, `n × K`.
    pub fn bias_mixture(&self, b: &Matrix) -> Result<Matrix> {
        self.bias.mixture(b)
    }

    /// Combine given bias-head probabilities with `f_c(c)` and `Pr`.
    pub fn combine_with_bias(&self, inv_logits: &Matrix, bias_probs: &Matrix) -> Result<Matrix> {
        if inv_logits.shape() != bias_probs.shape() || inv_logits.cols() != self.n_classes() {
            return Err(dim(
                "combine_with_bias",
                format!("f_c {:?} vs bias {:?}", inv_logits.shape(), bias_probs.shape()),
            ));
        }
        let prior = softmax_vec(&self.prior_logits);
        let mut out = Matrix::zeros(inv_logits.rows(), self.n_classes());
        for i in 0..out.rows() {
            let p = combine_multiclass(bias_probs.row(i), &softmax_vec(inv_logits.row(i)), &prior)?;
            out.row_mut(i).copy_from_slice(&p);
        }
        Ok(out)
    }

    /// Full prediction on content and bias means.
    pub fn predict(&self, c: &Matrix, b: &Matrix) -> Result<PredictionBundle> {
        if c.rows() != b.rows() {
            return Err(dim("predict", format!("{} content rows, {} bias rows", c.rows(), b.rows())));
        }
        let inv_logits = self.invariant_logits(c)?;
        let bias_probs = self.bias_mixture(b)?;
        let mut domain_weights = self.domain_posterior(b)?;
        for i in 0..domain_weights.rows() {
            let w = clip_simplex(domain_weights.row(i));
            domain_weights.row_mut(i).copy_from_slice(&w);
        }
        let combined_probs = self.combine_with_bias(&inv_logits, &bias_probs)?;
        Ok(PredictionBundle { inv_logits, bias_probs, domain_weights, combined_probs })
    }

    /// Log-space forward pass used for training.
    pub fn forward(&self, c: &Matrix, b: &Matrix) -> Result<HeadForward> {
        if c.rows() != b.rows() {
            return Err(dim("forward", format!("{} content rows, {} bias rows", c.rows(), b.rows())));
        }
        if c.cols() != self.n_c() {
            return Err(dim("forward", format!("c has {} columns, expected {}", c.cols(), self.n_c())));
        }
        let (inv_logits, fc_cache) = self.f_c.forward(c)?;
        let bias = self.bias.forward(b)?;
        let log_combined = combine_log(&bias.log_q, &inv_logits, &self.prior_logits)?;
        Ok(HeadForward { bias, inv_logits, log_combined, fc_cache })
    }

    /// Back-propagate the supplied loss derivatives.
    pub fn backward(&self, fwd: &HeadForward, up: &HeadUpstream) -> Result<HeadGrads> {
        let (n, k) = fwd.inv_logits.shape();
        let mut d_log_q = Matrix::zeros(n, k);
        let mut d_inv = Matrix::zeros(n, k);
        let mut d_prior = vec![0.0; k];
        if let Some(g) = &up.d_log_combined {
            let cg = combine_log_backward(&fwd.log_combined, &fwd.inv_logits, &self.prior_logits, g)?;
            d_log_q.axpy(1.0, &cg.d_log_q)?;
            d_inv.axpy(1.0, &cg.d_inv_logits)?;
            d_prior = cg.d_prior_logits;
        }
        if let Some(g) = &up.d_log_q {
            d_log_q.axpy(1.0, g)?;
        }
        if let Some(g) = &up.d_inv_logits {
            d_inv.axpy(1.0, g)?;
        }
        if let Some(g) = &up.d_prior_logits {
            if g.len() != k {
                return Err(dim("DecomposedHead::backward", "prior gradient length"));
            }
            for (a, b) in d_prior.iter_mut().zip(g) {
                *a += b;
            }
        }
        let fc = self.f_c.backward(&fwd.fc_cache, &d_inv)?;
        let (bias, d_b) = self.bias.backward(&fwd.bias, &d_log_q, up.d_log_w.as_ref())?;
        Ok(HeadGrads {
            params: DecomposedHead { f_c: fc.params, prior_logits: d_prior, bias },
            d_c: fc.input,
            d_b,
        })
    }

    /// Normalised log posterior in one call (no caches).
    pub fn log_combined(&self, c: &Matrix, b: &Matrix) -> Result<Matrix> {
        Ok(self.forward(c, b)?.log_combined)
    }

    /// `log_softmax(Pr)`, the log label prior.
    pub fn log_prior(&self) -> Vec<f64> {
        let m = Matrix::from_vec(1, self.n_classes(), self.prior_logits.clone()).expect("row vector");
        log_softmax_rows(&m).into_vec()
    }
}

impl Parameterized for DecomposedHead {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.f_c.visit(&mut |n, s| f(&format!("f_c.{n}"), s));
        f("prior_logits", &self.prior_logits);
        self.bias.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.f_c.visit_mut(&mut |n, s| f(&format!("f_c.{n}"), s));
        f("prior_logits", &mut self.prior_logits);
        self.bias.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combine::{combine_binary, nll_loss};
    use numkit::{assign, flatten, grad_check};

    fn setup(seed: u64, k: usize) -> (DecomposedHead, Matrix, Matrix) {
        let mut rng = Rng::new(seed);
        let h = DecomposedHead::init(2, 3, k, 3, 4, &mut rng).unwrap();
        let c = Matrix::from_fn(8, 2, |_, _| rng.normal());
        let b = Matrix::from_fn(8, 3, |_, _| rng.normal());
        (h, c, b)
    }

    #[test]
    fn zero_invariant_head_gives_zero_logits() {
        let (mut h, c, _) = setup(0, 2);
        h.f_c = h.f_c.zeros_like();
        assert!(h.invariant_logits(&c).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(h.invariant_logits(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn invariant_logits_hand_chain() {
        let (h, c, _) = setup(1, 2);
        let l = h.invariant_logits(&c).unwrap();
        let layer = &h.f_c.layers()[0];
        for i in 0..c.rows() {
            for k in 0..2 {
                let hand = layer.bias[k] + layer.weight.get(k, 0) * c.get(i, 0) + layer.weight.get(k, 1) * c.get(i, 1);
                assert!((hand - l.get(i, k)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bundle_is_consistent_with_combine_binary() {
        let (mut h, c, b) = setup(2, 2);
        h.prior_logits = vec![-0.2, 0.5];
        let pb = h.predict(&c, &b).unwrap();
        for i in 0..c.rows() {
            let inv = pb.inv_logits.get(i, 1) - pb.inv_logits.get(i, 0);
            let pr = h.prior_logits[1] - h.prior_logits[0];
            let p = combine_binary(pb.bias_probs.get(i, 1), inv, pr);
            assert!((p - pb.combined_probs.get(i, 1)).abs() < 1e-12);
            for m in [&pb.bias_probs, &pb.domain_weights, &pb.combined_probs] {
                assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
        let lc = h.log_combined(&c, &b).unwrap();
        for (a, p) in lc.data().iter().zip(pb.combined_probs.data()) {
            assert!((a.exp() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_from_labels() {
        let (mut h, _, _) = setup(3, 3);
        h.set_prior_from_labels(&[0, 1, 1, 2, 2, 2]).unwrap();
        let expect = [1.0f64 / 6.0, 2.0 / 6.0, 3.0 / 6.0].map(f64::ln);
        assert_eq!(h.prior_logits, expect.to_vec());
        assert!(h.set_prior_from_labels(&[0, 0, 1]).is_err());
        assert!(h.set_prior_from_labels(&[0, 5]).is_err());
    }

    #[test]
    fn backward_passes_grad_check() {
        for k in [2, 3] {
            let (h, c, b) = setup(4 + k as u64, k);
            let y: Vec<usize> = (0..8).map(|i| i % k).collect();
            let e: Vec<usize> = (0..8).map(|i| (i / 2) % 3).collect();
            let objective = |hh: &DecomposedHead, c: &Matrix, b: &Matrix| -> (f64, HeadGrads) {
                let fwd = hh.forward(c, b).unwrap();
                let (l1, g1) = nll_loss(&fwd.log_combined, &y).unwrap();
                let (l2, g2) = nll_loss(&log_softmax_rows(&fwd.inv_logits), &y).unwrap();
                let (l3, g3) = nll_loss(&fwd.bias.log_w, &e).unwrap();
                let up = HeadUpstream {
                    d_log_combined: Some(g1),
                    d_inv_logits: Some(numkit::log_softmax_rows_backward(&log_softmax_rows(&fwd.inv_logits), &g2)),
                    d_log_w: Some(g3),
                    ..Default::default()
                };
                (l1 + l2 + l3, hh.backward(&fwd, &up).unwrap())
            };
            let theta = flatten(&h);
            let err = grad_check(
                |t| {
                    let mut hh = h.clone();
                    assign(&mut hh, t)?;
                    let (v, g) = objective(&hh, &c, &b);
                    Ok((v, flatten(&g.params)))
                },
                &theta,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-7, "K={k}: {err}");
            let joint: Vec<f64> = c.data().iter().chain(b.data()).copied().collect();
            let err_in = grad_check(
                |t| {
                    let cc = Matrix::from_vec(8, 2, t[..16].to_vec())?;
                    let bb = Matrix::from_vec(8, 3, t[16..].to_vec())?;
                    let (v, g) = objective(&h, &cc, &bb);
                    Ok((v, g.d_c.data().iter().chain(g.d_b.data()).copied().collect()))
                },
                &joint,
                1e-5,
            )
            .unwrap();
            assert!(err_in < 1e-7, "K={k} inputs: {err_in}");
        }
    }
}
