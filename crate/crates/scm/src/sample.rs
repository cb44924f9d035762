use numkit::{Matrix, Rng};

use crate::config::ScmConfig;
use crate::dataset::LabeledDataset;
use crate::{Result, ScmError};

/// Which environments a generated dataset draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvSet {
    /// Environments drawn from π.
    Source,
    /// The held-out target environment only.
    Target,
}

impl EnvSet {
    fn stream(self) -> u64 {
        match self {
            EnvSet::Source => 1,
            EnvSet::Target => 2,
        }
    }
}

/// Draw an environment index with probability `probs[i]`.
pub fn sample_environment(probs: &[f64], rng: &mut Rng) -> usize {
    rng.categorical(probs)
}

/// `y = 1{wᵀE + b0 + ξ > 0}` with `ξ ~ N(0, σ_y²)`.
///
/// With `sigma_y = 0` no noise is drawn and the rule is deterministic.
pub fn sample_label(embedding: &[f64], w: &[f64], b0: f64, sigma_y: f64, rng: &mut Rng) -> usize {
    let score: f64 = w.iter().zip(embedding).map(|(a, b)| a * b).sum::<f64>() + b0;
    let noise = if sigma_y > 0.0 { sigma_y * rng.normal() } else { 0.0 };
    usize::from(score + noise > 0.0)
}

/// `c = c_y + ε` with `ε ~ N(0, σ_c² I)`; depends on `y` alone.
pub fn sample_content(y: usize, anchors: &[Vec<f64>; 2], sigma_c: f64, rng: &mut Rng) -> Vec<f64> {
    anchors[y]
        .iter()
        .map(|&a| if sigma_c > 0.0 { a + sigma_c * rng.normal() } else { a })
        .collect()
}

/// `b = E_e + C[e][y] + ζ` with `ζ ~ N(0, σ_b² I)`.
///
/// `e == cfg.n_envs()` addresses the target environment.
pub fn sample_bias(e: usize, y: usize, cfg: &ScmConfig, rng: &mut Rng) -> Vec<f64> {
    let (emb, table) = cfg.env(e);
    emb.iter()
        .zip(&table[y])
        .map(|(&m, &c)| {
            let noise = if cfg.sigma_b > 0.0 { cfg.sigma_b * rng.normal() } else { 0.0 };
            m + c + noise
        })
        .collect()
}

/// Generate `n` rows along the full causal chain, keeping true latents.
///
/// Rows are produced sequentially from one stream per `(seed, set)` pair, so
/// the output is bit-reproducible.
pub fn generate(cfg: &ScmConfig, n: usize, set: EnvSet, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(ScmError::Config("sample count must be positive".into()));
    }
    cfg.check(false)?;
    let mut rng = Rng::with_stream(seed, set.stream());
    let (nc, nb, nx) = (cfg.n_c(), cfg.n_b(), cfg.n_x());
    let mut x = Matrix::zeros(n, nx);
    let mut c_all = Matrix::zeros(n, nc);
    let mut b_all = Matrix::zeros(n, nb);
    let mut ys = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    let mut z = vec![0.0; nc + nb];
    for i in 0..n {
        let e = match set {
            EnvSet::Source => sample_environment(&cfg.env_probs, &mut rng),
            EnvSet::Target => cfg.n_envs(),
        };
        let (emb, _) = cfg.env(e);
        let y = sample_label(emb, &cfg.label_weights, cfg.label_offset, cfg.sigma_y, &mut rng);
        let c = sample_content(y, &cfg.content_anchors, cfg.sigma_c, &mut rng);
        let b = sample_bias(e, y, cfg, &mut rng);
        z[..nc].copy_from_slice(&c);
        z[nc..].copy_from_slice(&b);
        let row = x.row_mut(i);
        for (r, out) in row.iter_mut().enumerate() {
            let mixed: f64 = cfg.mixing.row(r).iter().zip(&z).map(|(m, v)| m * v).sum();
            let noise = if cfg.sigma_x > 0.0 { cfg.sigma_x * rng.normal() } else { 0.0 };
            *out = mixed + noise;
        }
        c_all.row_mut(i).copy_from_slice(&c);
        b_all.row_mut(i).copy_from_slice(&b);
        ys.push(y);
        es.push(e);
    }
    LabeledDataset::new(x, ys, es, Some((c_all, b_all)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::default_config;

    #[test]
    fn deterministic_label_rule() {
        let mut rng = Rng::new(0);
        // wᵀE + b0 = 5 with no noise → always 1
        for _ in 0..10 {
            assert_eq!(sample_label(&[1.0, 2.0], &[1.0, 2.0], 0.0, 0.0, &mut rng), 1);
        }
        // flipping w flips the label
        assert_eq!(sample_label(&[1.0, 2.0], &[-1.0, -2.0], 0.0, 0.0, &mut rng), 0);
    }

    #[test]
    fn noiseless_content_is_the_anchor() {
        let anchors = [vec![0.0, 1.0], vec![2.0, 3.0]];
        let mut rng = Rng::new(1);
        assert_eq!(sample_content(1, &anchors, 0.0, &mut rng), vec![2.0, 3.0]);
    }

    #[test]
    fn noiseless_bias_is_the_vector_sum() {
        let mut cfg = default_config(0);
        cfg.sigma_b = 0.0;
        let mut rng = Rng::new(2);
        let b = sample_bias(2, 1, &cfg, &mut rng);
        let expect: Vec<f64> =
            cfg.env_embeddings[2].iter().zip(&cfg.bias_table[2][1]).map(|(a, c)| a + c).collect();
        assert_eq!(b, expect);
    }

    #[test]
    fn target_rows_use_target_env() {
        let cfg = default_config(0);
        let ds = generate(&cfg, 50, EnvSet::Target, 3).unwrap();
        assert!(ds.e.iter().all(|&e| e == cfg.n_envs()));
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(generate(&default_config(0), 0, EnvSet::Source, 0).is_err());
    }
}
