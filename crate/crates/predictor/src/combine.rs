use numkit::{clip_prob, log_softmax_rows, log_softmax_rows_backward, log_softmax_vec, logit, sigmoid, Matrix, EPS_CLIP};

use crate::error::{dim, PredictorError, Result};

/// Move a probability vector into `[EPS_CLIP, 1 − EPS_CLIP]` while keeping
/// its sum at 1.
///
/// Entries below the floor are raised to it and the remaining mass is
/// rescaled proportionally. Vectors already inside the window are returned
/// unchanged, bit for bit.
pub fn clip_simplex(p: &[f64]) -> Vec<f64> {
    let mut out = p.to_vec();
    if out.len() < 2 {
        return out;
    }
    let mut floored = vec![false; out.len()];
    loop {
        let mut changed = false;
        for (v, f) in out.iter_mut().zip(floored.iter_mut()) {
            if !*f && *v < EPS_CLIP {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
        let fixed = floored.iter().filter(|&&f| f).count() as f64 * EPS_CLIP;
        let free: f64 = out.iter().zip(&floored).filter(|(_, &f)| !f).map(|(v, _)| *v).sum();
        let scale = (1.0 - fixed) / free;
        for (v, &f) in out.iter_mut().zip(&floored) {
            *v = if f { EPS_CLIP } else { *v * scale };
        }
    }
}

fn check_simplex(op: &'static str, p: &[f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (total - 1.0).abs() > 1e-9 {
        return Err(PredictorError::Distribution { op, detail: format!("{p:?} is not a probability vector") });
    }
    Ok(())
}

/// `p(y=1 | c, b) = σ(logit(p(y=1|b)) + logit(p(y=1|c)) − logit(p(y=1)))`.
///
/// `bias_p1` is clipped into `[EPS_CLIP, 1 − EPS_CLIP]` before the logit.
pub fn combine_binary(bias_p1: f64, inv_logit1: f64, prior_logit1: f64) -> f64 {
    let lb = logit(clip_prob(bias_p1)).expect("clipped probability is inside (0, 1)");
    clip_prob(sigmoid(lb + inv_logit1 - prior_logit1))
}

/// `P / ‖P‖₁` with `P_k = p(y=k|b)·p(y=k|c) / p(y=k)`.
///
/// The inputs are clipped into the probability window first, and so is the
/// output.
pub fn combine_multiclass(bias_probs: &[f64], inv_probs: &[f64], prior_probs: &[f64]) -> Result<Vec<f64>> {
    let k = bias_probs.len();
    if inv_probs.len() != k || prior_probs.len() != k {
        return Err(dim(
            "combine_multiclass",
            format!("lengths {} / {} / {}", k, inv_probs.len(), prior_probs.len()),
        ));
    }
    for (op, p) in [("bias_probs", bias_probs), ("inv_probs", inv_probs), ("prior_probs", prior_probs)] {
        check_simplex(op, p)?;
    }
    let (b, c, pr) = (clip_simplex(bias_probs), clip_simplex(inv_probs), clip_simplex(prior_probs));
    let raw: Vec<f64> = (0..k).map(|i| b[i] * c[i] / pr[i]).collect();
    let total: f64 = raw.iter().sum();
    Ok(clip_simplex(&raw.iter().map(|v| v / total).collect::<Vec<_>>()))
}

/// The minimiser of `Σ_e p(e|b)·KL(p(y|b,e) ‖ q)` over distributions `q`:
/// the mixture `Σ_e p(e|b)·p(y|b,e)`.
pub fn kl_optimal_mixture(domain_post: &[f64], per_env_cond: &[Vec<f64>]) -> Result<Vec<f64>> {
    if domain_post.len() != per_env_cond.len() || per_env_cond.is_empty() {
        return Err(dim(
            "kl_optimal_mixture",
            format!("{} weights for {} conditionals", domain_post.len(), per_env_cond.len()),
        ));
    }
    check_simplex("domain_post", domain_post)?;
    let k = per_env_cond[0].len();
    let mut q = vec![0.0; k];
    for (w, p) in domain_post.iter().zip(per_env_cond) {
        if p.len() != k {
            return Err(dim("kl_optimal_mixture", "conditionals of different lengths"));
        }
        check_simplex("per_env_cond", p)?;
        for (qi, pi) in q.iter_mut().zip(p) {
            *qi += w * pi;
        }
    }
    Ok(q)
}

/// `Σ_e w_e·KL(p_e ‖ q)`, with `0·ln 0 = 0` and `+∞` where `q` misses mass.
pub fn expected_kl(domain_post: &[f64], per_env_cond: &[Vec<f64>], q: &[f64]) -> f64 {
    domain_post
        .iter()
        .zip(per_env_cond)
        .map(|(w, p)| {
            w * p
                .iter()
                .zip(q)
                .map(|(&pi, &qi)| if pi == 0.0 { 0.0 } else if qi == 0.0 { f64::INFINITY } else { pi * (pi / qi).ln() })
                .sum::<f64>()
        })
        .sum()
}

/// Mean negative log-likelihood of integer labels under row-wise log
/// probabilities, with its gradient.
pub fn nll_loss(log_probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = log_probs.shape();
    if labels.len() != n || n == 0 {
        return Err(dim("nll_loss", format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(dim("nll_loss", format!("label {bad} with {k} classes")));
    }
    let inv = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, k);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total -= log_probs.get(i, y);
        grad.set(i, y, -inv);
    }
    Ok((total * inv, grad))
}

/// Gradients of a loss on [`combine_log`]'s output with respect to its inputs.
#[derive(Debug, Clone)]
pub struct CombineGrad {
    pub d_log_q: Matrix,
    pub d_inv_logits: Matrix,
    pub d_prior_logits: Vec<f64>,
}

/// Normalised log posterior `log_softmax(log q + log_softmax(f_c) − log_softmax(Pr))`.
pub fn combine_log(log_q: &Matrix, inv_logits: &Matrix, prior_logits: &[f64]) -> Result<Matrix> {
    if log_q.shape() != inv_logits.shape() || prior_logits.len() != log_q.cols() {
        return Err(dim(
            "combine_log",
            format!("log q {:?}, f_c {:?}, prior {}", log_q.shape(), inv_logits.shape(), prior_logits.len()),
        ));
    }
    let ls_pr = log_softmax_vec(prior_logits);
    let mut s = log_softmax_rows(inv_logits);
    s.axpy(1.0, log_q)?;
    for i in 0..s.rows() {
        for (v, p) in s.row_mut(i).iter_mut().zip(&ls_pr) {
            *v -= p;
        }
    }
    Ok(log_softmax_rows(&s))
}

/// Back-propagate `upstream = ∂L/∂combine_log(..)` to the three inputs.
pub fn combine_log_backward(
    out: &Matrix,
    inv_logits: &Matrix,
    prior_logits: &[f64],
    upstream: &Matrix,
) -> Result<CombineGrad> {
    if upstream.shape() != out.shape() {
        return Err(dim("combine_log_backward", "upstream shape differs from output"));
    }
    let d_s = log_softmax_rows_backward(out, upstream);
    let d_inv_logits = log_softmax_rows_backward(&log_softmax_rows(inv_logits), &d_s);
    let total = d_s.col_sums();
    let sum: f64 = total.iter().sum();
    let pr = log_softmax_vec(prior_logits);
    let d_prior_logits = total.iter().zip(&pr).map(|(g, l)| -(g - l.exp() * sum)).collect();
    Ok(CombineGrad { d_log_q: d_s, d_inv_logits, d_prior_logits })
}
