use disentangle::{cross_moment_penalty, vae_loss_grad, Pooling, VaeParams};
use numkit::{log_softmax_rows, log_softmax_rows_backward, softmax_vec, Matrix, Parameterized};
use predictor::{nll_loss, DecomposedHead, HeadUpstream};

use crate::config::TrainConfig;
use crate::error::Result;

/// The jointly trained Stage-1 parameters: VAE and decomposed head.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub vae: VaeParams,
    pub head: DecomposedHead,
}

impl Parameterized for SourceModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.vae.visit(&mut |n, s| f(&format!("vae.{n}"), s));
        self.head.visit(&mut |n, s| f(&format!("head.{n}"), s));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.vae.visit_mut(&mut |n, s| f(&format!("vae.{n}"), s));
        self.head.visit_mut(&mut |n, s| f(&format!("head.{n}"), s));
    }
}

/// Weights of every term in the source objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// VAE objective (`λ0`).
    pub vae: f64,
    /// Pooled conditional-independence penalty (`λ1`).
    pub ind: f64,
    /// Per-class independence penalty between `ĉ` and `b̂`.
    pub ind_class: f64,
    /// Per-class independence penalty between `ĉ` and the environment one-hot.
    pub ind_env: f64,
    /// Auxiliary cross-entropies of `Pr` and of `f_c` alone.
    pub aux: f64,
    /// Domain-classifier cross-entropy against the source environment.
    pub domain: f64,
    /// Squared-norm penalty on expert weight matrices.
    pub expert_decay: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        LossWeights {
            vae: cfg.lambda0,
            ind: cfg.lambda1,
            ind_class: cfg.lambda_class,
            ind_env: cfg.lambda_env,
            aux: cfg.lambda_aux,
            domain: cfg.lambda_domain,
            expert_decay: cfg.expert_decay,
        }
    }

    /// Only the classification loss: the decomposed architecture trained by
    /// plain empirical risk minimisation.
    pub fn classification_only() -> Self {
        LossWeights { vae: 0.0, ind: 0.0, ind_class: 0.0, ind_env: 0.0, aux: 0.0, domain: 0.0, expert_decay: 0.0 }
    }
}

/// Unweighted values of every term of the source objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// Cross-entropy of the combined prediction (`L_cls`).
    pub cls: f64,
    pub aux_prior: f64,
    pub aux_invariant: f64,
    pub domain: f64,
    /// `L_vae`.
    pub vae: f64,
    /// `L_ind`.
    pub ind: f64,
    pub ind_class: f64,
    pub ind_env: f64,
    pub expert_norm: f64,
}

impl LossParts {
    /// `L_all` recomputed from the parts.
    pub fn total(&self, w: &LossWeights) -> f64 {
        self.cls
            + w.aux * (self.aux_prior + self.aux_invariant)
            + w.domain * self.domain
            + w.vae * self.vae
            + w.ind * self.ind
            + w.ind_class * self.ind_class
            + w.ind_env * self.ind_env
            + w.expert_decay * self.expert_norm
    }
}

/// One labelled source batch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub e: &'a [usize],
    /// Width of the environment one-hot.
    pub n_envs: usize,
}

/// Value, parts and parameter gradient of one objective evaluation.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub parts: LossParts,
    pub grads: SourceModel,
}

fn one_hot(e: &[usize], width: usize) -> Matrix {
    let mut m = Matrix::zeros(e.len(), width);
    for (i, &k) in e.iter().enumerate() {
        m.set(i, k, 1.0);
    }
    m
}

/// `L_all` and its exact gradient for a fixed reparameterization draw.
///
/// Classification reads the posterior means `(ĉ, b̂)`; only the VAE term
/// sees the sampled code. The domain term is skipped for single-domain heads.
pub fn objective(model: &SourceModel, batch: Batch<'_>, noise: &Matrix, w: &LossWeights) -> Result<Objective> {
    let n = batch.y.len();
    let fwd = model.vae.forward_train(batch.x, noise)?;
    let c = fwd.latents.content_means();
    let b = fwd.latents.bias_means();
    let head_fwd = model.head.forward(&c, &b)?;
    let mut parts = LossParts::default();

    let (cls, d_log_combined) = nll_loss(&head_fwd.log_combined, batch.y)?;
    parts.cls = cls;

    // Auxiliary terms: each head on its own must also predict y.
    let k = model.head.n_classes();
    let log_prior = model.head.log_prior();
    parts.aux_prior = -batch.y.iter().map(|&y| log_prior[y]).sum::<f64>() / n as f64;
    let prior = softmax_vec(&model.head.prior_logits);
    let mut freq = vec![0.0; k];
    for &y in batch.y {
        freq[y] += 1.0 / n as f64;
    }
    let d_prior: Vec<f64> = prior.iter().zip(&freq).map(|(p, f)| w.aux * (p - f)).collect();
    let ls_inv = log_softmax_rows(&head_fwd.inv_logits);
    let (aux_inv, g_inv) = nll_loss(&ls_inv, batch.y)?;
    parts.aux_invariant = aux_inv;
    let mut d_inv = log_softmax_rows_backward(&ls_inv, &g_inv);
    d_inv.scale(w.aux);

    let d_log_w = if model.head.n_domains() > 1 {
        let (dom, mut g) = nll_loss(&head_fwd.bias.log_w, batch.e)?;
        parts.domain = dom;
        g.scale(w.domain);
        Some(g)
    } else {
        None
    };

    let head_grads = model.head.backward(
        &head_fwd,
        &HeadUpstream {
            d_log_combined: Some(d_log_combined),
            d_log_q: None,
            d_log_w,
            d_inv_logits: Some(d_inv),
            d_prior_logits: Some(d_prior),
        },
    )?;
    let mut head_params = head_grads.params;
    for (g, expert) in head_params.bias.experts.iter_mut().zip(&model.head.bias.experts) {
        for (gl, l) in g.layers_mut().iter_mut().zip(expert.layers()) {
            parts.expert_norm += l.weight.frobenius_sq();
            gl.weight.axpy(2.0 * w.expert_decay, &l.weight)?;
        }
    }

    let vg = vae_loss_grad(batch.x, &fwd.x_hat, &fwd.latents, model.vae.beta)?;
    parts.vae = vg.value;

    let ind = cross_moment_penalty(&c, &b, batch.y, Pooling::Pooled)?;
    let ind_class = cross_moment_penalty(&c, &b, batch.y, Pooling::PerClass)?;
    let env = cross_moment_penalty(&c, &one_hot(batch.e, batch.n_envs), batch.y, Pooling::PerClass)?;
    parts.ind = ind.value;
    parts.ind_class = ind_class.value;
    parts.ind_env = env.value;

    let mut d_c = head_grads.d_c;
    d_c.axpy(w.ind, &ind.d_c)?;
    d_c.axpy(w.ind_class, &ind_class.d_c)?;
    d_c.axpy(w.ind_env, &env.d_c)?;
    let mut d_b = head_grads.d_b;
    d_b.axpy(w.ind, &ind.d_t)?;
    d_b.axpy(w.ind_class, &ind_class.d_t)?;

    let mut d_mean = d_c.hcat(&d_b)?;
    d_mean.axpy(w.vae, &vg.d_mean)?;
    let mut d_xhat = vg.d_xhat;
    d_xhat.scale(w.vae);
    let mut d_logvar = vg.d_logvar;
    d_logvar.scale(w.vae);
    let vae = model.vae.backward(&fwd, &d_xhat, &d_mean, &d_logvar)?;

    Ok(Objective { value: parts.total(w), parts, grads: SourceModel { vae, head: head_params } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use numkit::{assign, flatten, grad_check_with, Rng};

    fn setup(m: usize) -> (SourceModel, Matrix, Vec<usize>, Vec<usize>, Matrix) {
        let mut rng = Rng::new(11);
        let vae = VaeParams::init(6, 2, 3, &[], 1.0, &mut rng).unwrap();
        let head = DecomposedHead::init(2, 3, 2, m, 4, &mut rng).unwrap();
        let x = Matrix::from_fn(16, 6, |_, _| rng.normal());
        let y: Vec<usize> = (0..16).map(|i| (i * 7 % 5) % 2).collect();
        let e: Vec<usize> = (0..16).map(|i| i % 3).collect();
        let noise = Matrix::from_fn(16, 5, |_, _| rng.normal());
        (SourceModel { vae, head }, x, y, e, noise)
    }

    fn weights() -> LossWeights {
        LossWeights { vae: 0.7, ind: 3.0, ind_class: 2.0, ind_env: 1.5, aux: 0.5, domain: 0.8, expert_decay: 0.1 }
    }

    #[test]
    fn total_is_the_weighted_sum_of_parts() {
        let (m, x, y, e, noise) = setup(3);
        let batch = Batch { x: &x, y: &y, e: &e, n_envs: 3 };
        let w = weights();
        let obj = objective(&m, batch, &noise, &w).unwrap();
        let p = obj.parts;
        let by_hand = p.cls
            + 0.5 * p.aux_prior
            + 0.5 * p.aux_invariant
            + 0.8 * p.domain
            + 0.7 * p.vae
            + 3.0 * p.ind
            + 2.0 * p.ind_class
            + 1.5 * p.ind_env
            + 0.1 * p.expert_norm;
        assert!((obj.value - by_hand).abs() < 1e-12);
        assert!(p.ind > 0.0 && p.ind_class > 0.0 && p.ind_env > 0.0 && p.domain > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for m_domains in [1, 3] {
            let (m, x, y, e, noise) = setup(m_domains);
            let batch = Batch { x: &x, y: &y, e: &e, n_envs: 3 };
            let w = weights();
            let obj = objective(&m, batch, &noise, &w).unwrap();
            let theta = flatten(&m);
            let err = grad_check_with(
                |t| {
                    let mut probe = m.clone();
                    assign(&mut probe, t).unwrap();
                    Ok(objective(&probe, batch, &noise, &w).unwrap().value)
                },
                &flatten(&obj.grads),
                &theta,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-5, "M = {m_domains}: {err}");
        }
    }

    #[test]
    fn classification_only_weights_leave_only_the_cls_gradient() {
        let (m, x, y, e, noise) = setup(3);
        let batch = Batch { x: &x, y: &y, e: &e, n_envs: 3 };
        let obj = objective(&m, batch, &noise, &LossWeights::classification_only()).unwrap();
        assert_eq!(obj.value, obj.parts.cls);
        // The decoder only feeds the reconstruction, so it receives nothing.
        assert!(flatten(&obj.grads.vae.decoder).iter().all(|&g| g == 0.0));
    }
}
