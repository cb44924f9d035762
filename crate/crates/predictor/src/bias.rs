use numkit::{
    log_softmax_rows, log_softmax_rows_backward, Activation, Matrix, Mlp, MlpCache, Parameterized, Rng,
};

use crate::combine::clip_simplex;
use crate::error::{dim, PredictorError, Result};

/// The bias-aware predictor `f_b`: a domain classifier `p(e | b)` over `M`
/// learnable domain embeddings and one expert `p(y | b, e_i)` per domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasHead {
    /// `n_b → M` linear scores; softmax gives the domain posterior.
    pub domain_classifier: Mlp,
    /// `M × d_e`, one row per domain.
    pub embeddings: Matrix,
    /// `M` networks mapping `[b; e_i]` (`n_b + d_e`) to `K` logits.
    pub experts: Vec<Mlp>,
}

/// Cached log-space quantities from [`BiasHead::forward`].
#[derive(Debug, Clone)]
pub struct BiasForward {
    /// `log p(e = i | b)`, `n × M`.
    pub log_w: Matrix,
    /// `log p(y | b, e = i)` for each expert, each `n × K`.
    pub log_p: Vec<Matrix>,
    /// `log Σ_i p(e = i | b)·p(y | b, e = i)`, `n × K`.
    pub log_q: Matrix,
    dom_cache: MlpCache,
    expert_caches: Vec<MlpCache>,
}

impl BiasHead {
    /// Check that the classifier, embedding table and experts agree.
    pub fn new(domain_classifier: Mlp, embeddings: Matrix, experts: Vec<Mlp>) -> Result<Self> {
        let m = embeddings.rows();
        if m == 0 || experts.len() != m || domain_classifier.output_dim() != m {
            return Err(dim(
                "BiasHead::new",
                format!(
                    "{} embeddings, {} experts, {} domain scores",
                    m,
                    experts.len(),
                    domain_classifier.output_dim()
                ),
            ));
        }
        let n_b = domain_classifier.input_dim();
        let k = experts[0].output_dim();
        for (i, e) in experts.iter().enumerate() {
            if e.input_dim() != n_b + embeddings.cols() || e.output_dim() != k {
                return Err(dim(
                    "BiasHead::new",
                    format!("expert {i} maps {} → {}, need {} → {k}", e.input_dim(), e.output_dim(), n_b + embeddings.cols()),
                ));
            }
        }
        Ok(BiasHead { domain_classifier, embeddings, experts })
    }

    /// Linear classifier and experts with `U(±1/√fan_in)` weights and
    /// embeddings drawn from `0.1·N(0, 1)`.
    pub fn init(n_b: usize, n_classes: usize, n_domains: usize, d_e: usize, rng: &mut Rng) -> Result<Self> {
        let domain_classifier = Mlp::init(&[n_b, n_domains], &[Activation::Identity], rng)?;
        let embeddings = Matrix::from_fn(n_domains, d_e, |_, _| 0.1 * rng.normal());
        let experts = (0..n_domains)
            .map(|_| Mlp::init(&[n_b + d_e, n_classes], &[Activation::Identity], rng))
            .collect::<numkit::Result<Vec<_>>>()?;
        Self::new(domain_classifier, embeddings, experts)
    }

    pub fn n_b(&self) -> usize {
        self.domain_classifier.input_dim()
    }

    pub fn n_domains(&self) -> usize {
        self.experts.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.experts[0].output_dim()
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        BiasHead {
            domain_classifier: self.domain_classifier.zeros_like(),
            embeddings: Matrix::zeros(self.embeddings.rows(), self.embeddings.cols()),
            experts: self.experts.iter().map(Mlp::zeros_like).collect(),
        }
    }

    fn check_b(&self, op: &'static str, b: &Matrix) -> Result<()> {
        if b.cols() != self.n_b() {
            return Err(dim(op, format!("b has {} columns, expected n_b = {}", b.cols(), self.n_b())));
        }
        Ok(())
    }

    fn expert_input(&self, b: &Matrix, i: usize) -> Result<Matrix> {
        let e = self.embeddings.row(i);
        let tiled = Matrix::from_fn(b.rows(), e.len(), |_, j| e[j]);
        Ok(b.hcat(&tiled)?)
    }

    /// `p(e = i | b)` for every row, `n × M`.
    pub fn domain_posterior(&self, b: &Matrix) -> Result<Matrix> {
        self.check_b("domain_posterior", b)?;
        Ok(log_softmax_rows(&self.domain_classifier.predict(b)?).map(f64::exp))
    }

    /// `p(y | b, e = e_i)` for every row, `n × K`.
    pub fn expert_probs(&self, b: &Matrix, i: usize) -> Result<Matrix> {
        self.check_b("expert_probs", b)?;
        let expert = self
            .experts
            .get(i)
            .ok_or(PredictorError::ExpertIndex { index: i, count: self.experts.len() })?;
        Ok(log_softmax_rows(&expert.predict(&self.expert_input(b, i)?)?).map(f64::exp))
    }

    /// `Σ_i p(e = i | b)·p(y | b, e = i)`, each row clipped into the
    /// probability window.
    pub fn mixture(&self, b: &Matrix) -> Result<Matrix> {
        let fwd = self.forward(b)?;
        let mut q = fwd.log_q.map(f64::exp);
        for i in 0..q.rows() {
            let row = clip_simplex(q.row(i));
            q.row_mut(i).copy_from_slice(&row);
        }
        Ok(q)
    }

    /// Log-space forward pass; the mixture is a row-wise log-sum-exp so no
    /// probability is clipped.
    pub fn forward(&self, b: &Matrix) -> Result<BiasForward> {
        self.check_b("BiasHead::forward", b)?;
        let (scores, dom_cache) = self.domain_classifier.forward(b)?;
        let log_w = log_softmax_rows(&scores);
        let mut log_p = Vec::with_capacity(self.n_domains());
        let mut expert_caches = Vec::with_capacity(self.n_domains());
        for (i, expert) in self.experts.iter().enumerate() {
            let (logits, cache) = expert.forward(&self.expert_input(b, i)?)?;
            log_p.push(log_softmax_rows(&logits));
            expert_caches.push(cache);
        }
        let (n, k) = (b.rows(), self.n_classes());
        let mut log_q = Matrix::zeros(n, k);
        let mut terms = vec![0.0; self.n_domains()];
        for r in 0..n {
            for c in 0..k {
                for (i, t) in terms.iter_mut().enumerate() {
                    *t = log_w.get(r, i) + log_p[i].get(r, c);
                }
                log_q.set(r, c, numkit::logsumexp(&terms));
            }
        }
        Ok(BiasForward { log_w, log_p, log_q, dom_cache, expert_caches })
    }

    /// Gradients of a loss given `∂L/∂log q` and (optionally) `∂L/∂log w`,
    /// as parameter gradients plus `∂L/∂b`.
    pub fn backward(&self, fwd: &BiasForward, d_log_q: &Matrix, d_log_w: Option<&Matrix>) -> Result<(BiasHead, Matrix)> {
        let (n, k) = fwd.log_q.shape();
        let m = self.n_domains();
        if d_log_q.shape() != (n, k) {
            return Err(dim("BiasHead::backward", format!("∂log q {:?} for {:?}", d_log_q.shape(), (n, k))));
        }
        let mut g_w = match d_log_w {
            Some(g) if g.shape() == (n, m) => g.clone(),
            Some(g) => return Err(dim("BiasHead::backward", format!("∂log w {:?} for {:?}", g.shape(), (n, m)))),
            None => Matrix::zeros(n, m),
        };
        // Responsibilities r_ik = p(e=i|b)·p(y=k|b,e=i) / q_k route the
        // log-sum-exp gradient to each domain weight and expert.
        let mut g_p: Vec<Matrix> = (0..m).map(|_| Matrix::zeros(n, k)).collect();
        for r in 0..n {
            for c in 0..k {
                let g = d_log_q.get(r, c);
                let lq = fwd.log_q.get(r, c);
                for i in 0..m {
                    let resp = (fwd.log_w.get(r, i) + fwd.log_p[i].get(r, c) - lq).exp();
                    g_p[i].set(r, c, g * resp);
                    g_w.set(r, i, g_w.get(r, i) + g * resp);
                }
            }
        }
        let d_scores = log_softmax_rows_backward(&fwd.log_w, &g_w);
        let dom = self.domain_classifier.backward(&fwd.dom_cache, &d_scores)?;
        let mut grads = self.zeros_like();
        grads.domain_classifier = dom.params;
        let mut d_b = dom.input;
        let n_b = self.n_b();
        for i in 0..m {
            let d_logits = log_softmax_rows_backward(&fwd.log_p[i], &g_p[i]);
            let eg = self.experts[i].backward(&fwd.expert_caches[i], &d_logits)?;
            grads.experts[i] = eg.params;
            d_b.axpy(1.0, &eg.input.col_range(0, n_b))?;
            let d_e = eg.input.col_range(n_b, n_b + self.embedding_dim()).col_sums();
            grads.embeddings.row_mut(i).copy_from_slice(&d_e);
        }
        Ok((grads, d_b))
    }
}

impl Parameterized for BiasHead {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.domain_classifier.visit(&mut |n, s| f(&format!("domain_classifier.{n}"), s));
        f("embeddings", self.embeddings.data());
        for (i, e) in self.experts.iter().enumerate() {
            e.visit(&mut |n, s| f(&format!("experts.{i}.{n}"), s));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.domain_classifier.visit_mut(&mut |n, s| f(&format!("domain_classifier.{n}"), s));
        f("embeddings", self.embeddings.data_mut());
        for (i, e) in self.experts.iter_mut().enumerate() {
            e.visit_mut(&mut |n, s| f(&format!("experts.{i}.{n}"), s));
        }
    }
}
