use calibrate::{BinaryCalib, ConfusionMatrix};
use disentangle::VaeParams;
use numkit::{Matrix, Parameterized};
use predictor::{DecomposedHead, PredictionBundle};
use sha2::{Digest, Sha256};

use crate::error::{AdaptError, Result};

/// Pseudo-label reliability estimated on held-out source data.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    Binary(BinaryCalib),
    Multiclass(ConfusionMatrix),
}

impl Calibration {
    /// The `K × K` confusion matrix; a binary calibration becomes
    /// `[[h0, 1 − h1], [1 − h0, h1]]`.
    pub fn confusion(&self) -> ConfusionMatrix {
        match self {
            Calibration::Multiclass(c) => c.clone(),
            Calibration::Binary(b) => {
                let eps = Matrix::from_rows(&[vec![b.h0, 1.0 - b.h1], vec![1.0 - b.h0, b.h1]])
                    .expect("2 × 2 rows");
                let counts = b.counts.iter().map(|r| r.to_vec()).collect();
                ConfusionMatrix { eps, counts }
            }
        }
    }

    /// Reliability margin (`h0 + h1 − 1` in the binary case).
    pub fn margin(&self) -> f64 {
        match self {
            Calibration::Binary(b) => b.margin(),
            Calibration::Multiclass(c) => c.margin(),
        }
    }
}

/// Every learned object of the method: VAE, decomposed head and the
/// source-side calibration of the invariant head's pseudo-labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BagModel {
    pub vae: VaeParams,
    pub head: DecomposedHead,
    pub calib: Option<Calibration>,
}

impl BagModel {
    /// Check the `n_x → n_z → heads` dimension chain.
    pub fn new(vae: VaeParams, head: DecomposedHead, calib: Option<Calibration>) -> Result<Self> {
        if head.n_c() != vae.n_c() || head.n_b() != vae.n_b() {
            return Err(AdaptError::Inconsistent(format!(
                "VAE latents (n_c = {}, n_b = {}) vs head inputs (n_c = {}, n_b = {})",
                vae.n_c(),
                vae.n_b(),
                head.n_c(),
                head.n_b()
            )));
        }
        if let Some(c) = &calib {
            let k = match c {
                Calibration::Binary(_) => 2,
                Calibration::Multiclass(m) => m.n_classes(),
            };
            if k != head.n_classes() {
                return Err(AdaptError::Inconsistent(format!(
                    "calibration for {k} classes, head predicts {}",
                    head.n_classes()
                )));
            }
        }
        Ok(BagModel { vae, head, calib })
    }

    pub fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    /// Posterior means `(ĉ, b̂)` of a batch.
    pub fn encode_means(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let lat = self.vae.encode(x)?;
        Ok((lat.content_means(), lat.bias_means()))
    }

    /// Stage-1 prediction bundle (no adaptation, no correction).
    pub fn predict_bundle(&self, x: &Matrix) -> Result<PredictionBundle> {
        let (c, b) = self.encode_means(x)?;
        Ok(self.head.predict(&c, &b)?)
    }

    /// Stage-1 class probabilities.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.predict_bundle(x)?.combined_probs)
    }

    /// SHA-256 over the names and bit patterns of every parameter outside
    /// `f_b`: encoder, decoder, `f_c` and `Pr`.
    pub fn frozen_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |name: &str, values: &[f64]| {
            h.update(name.as_bytes());
            h.update((values.len() as u64).to_le_bytes());
            for v in values {
                h.update(v.to_bits().to_le_bytes());
            }
        };
        self.vae.visit(&mut |n, s| feed(&format!("vae.{n}"), s));
        self.head.f_c.visit(&mut |n, s| feed(&format!("f_c.{n}"), s));
        feed("prior_logits", &self.head.prior_logits);
        hex::encode(h.finalize())
    }

    /// SHA-256 over the `f_b` parameters (changes during adaptation).
    pub fn bias_hash(&self) -> String {
        let mut h = Sha256::new();
        self.head.bias.visit(&mut |n, s| {
            h.update(n.as_bytes());
            h.update((s.len() as u64).to_le_bytes());
            for v in s {
                h.update(v.to_bits().to_le_bytes());
            }
        });
        hex::encode(h.finalize())
    }
}
