use std::path::Path;

use adapt::{AdaptConfig, BiasTrainable, CorrectionMode, TtaOptimizer};
use scm::{GeneratorSettings, ScmConfig};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Method variants compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Full method: VAE, mixture-of-experts bias head, adaptation and correction.
    #[serde(rename = "BAG")]
    Bag,
    /// Without the VAE objective (`λ0 = 0`).
    #[serde(rename = "BAG_VAE")]
    BagVae,
    /// Without test-time adaptation (bias head kept from source training).
    #[serde(rename = "BAG_RE")]
    BagRe,
    /// Without the mixture of experts (one expert, uniform domain weights).
    #[serde(rename = "BAG_TTA")]
    BagTta,
    /// Plain MLP on `x`, no latent split, no adaptation.
    #[serde(rename = "ERM")]
    Erm,
}

/// Which parts of the method a variant keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub latent_split: bool,
    pub vae_objective: bool,
    pub expert_mixture: bool,
    pub adaptation: bool,
}

impl Components {
    /// Every component of `other` is also present here.
    pub fn contains(&self, other: &Components) -> bool {
        (self.latent_split || !other.latent_split)
            && (self.vae_objective || !other.vae_objective)
            && (self.expert_mixture || !other.expert_mixture)
            && (self.adaptation || !other.adaptation)
    }
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Erm, Variant::Bag, Variant::BagVae, Variant::BagRe, Variant::BagTta];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Bag => "BAG",
            Variant::BagVae => "BAG_VAE",
            Variant::BagRe => "BAG_RE",
            Variant::BagTta => "BAG_TTA",
            Variant::Erm => "ERM",
        }
    }

    pub fn from_tag(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.tag() == s)
    }

    pub fn components(self) -> Components {
        let all = Components { latent_split: true, vae_objective: true, expert_mixture: true, adaptation: true };
        match self {
            Variant::Bag => all,
            Variant::BagVae => Components { vae_objective: false, ..all },
            Variant::BagRe => Components { adaptation: false, ..all },
            Variant::BagTta => Components { expert_mixture: false, ..all },
            Variant::Erm => Components {
                latent_split: false,
                vae_objective: false,
                expert_mixture: false,
                adaptation: false,
            },
        }
    }
}

/// Every knob of a run: training, adaptation, baseline, benchmark layout and
/// the synthetic generator, in one flat JSON object.
///
/// Missing keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    // Loss weights.
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda_class: f64,
    pub lambda_env: f64,
    pub lambda_aux: f64,
    pub lambda_domain: f64,
    pub expert_decay: f64,
    pub beta: f64,
    // Source optimisation.
    pub epochs: usize,
    /// `0` means full batch.
    pub batch_size: usize,
    pub step_size: f64,
    pub n_c: usize,
    pub n_b: usize,
    /// Hidden tanh widths of the encoder (empty: linear encoder/decoder).
    pub encoder_hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub holdout_fraction: f64,
    pub variant: Variant,
    // Adaptation.
    pub tta_epochs: usize,
    pub tta_step_size: f64,
    pub tta_batch_size: usize,
    pub tta_optimizer: String,
    pub correction_mode: String,
    // Baseline.
    pub erm_hidden: usize,
    pub erm_epochs: usize,
    pub erm_step_size: f64,
    // Benchmark layout.
    pub n_source: usize,
    pub n_target: usize,
    pub variants: Vec<Variant>,
    // Generator.
    pub mixing_seed: u64,
    pub env_probs: Vec<f64>,
    pub env_u: Vec<f64>,
    pub env_v: Vec<f64>,
    pub env_sign: Vec<f64>,
    pub bias_strength: f64,
    pub target_u: f64,
    pub target_v: f64,
    pub target_offset: f64,
    pub content_sep: f64,
    pub label_offset: f64,
    pub sigma_y: f64,
    pub sigma_c: f64,
    pub sigma_b: f64,
    pub sigma_x: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let g = GeneratorSettings::default();
        TrainConfig {
            lambda0: 1.0,
            lambda1: 10.0,
            lambda_class: 100.0,
            lambda_env: 100.0,
            lambda_aux: 1.0,
            lambda_domain: 1.0,
            expert_decay: 0.01,
            beta: 1.0,
            epochs: 1000,
            batch_size: 0,
            step_size: 1e-2,
            n_c: g.n_c,
            n_b: g.n_b,
            encoder_hidden: Vec::new(),
            embedding_dim: 8,
            seed: 0,
            train_fraction: 0.8,
            holdout_fraction: 0.2,
            variant: Variant::Bag,
            tta_epochs: 30,
            tta_step_size: 0.05,
            tta_batch_size: 0,
            tta_optimizer: "adam".into(),
            correction_mode: "binary_phi".into(),
            erm_hidden: 36,
            erm_epochs: 200,
            erm_step_size: 1e-2,
            n_source: 5000,
            n_target: 1000,
            variants: Variant::ALL.to_vec(),
            mixing_seed: 0,
            env_probs: g.env_probs,
            env_u: g.env_u,
            env_v: g.env_v,
            env_sign: g.env_sign,
            bias_strength: g.bias_strength,
            target_u: g.target_u,
            target_v: g.target_v,
            target_offset: g.target_offset,
            content_sep: g.content_sep,
            label_offset: g.label_offset,
            sigma_y: g.sigma_y,
            sigma_c: g.sigma_c,
            sigma_b: g.sigma_b,
            sigma_x: g.sigma_x,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(BenchError::Config(msg()))
    }
}

impl TrainConfig {
    /// Parse a flat JSON object and validate it.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_slice(bytes).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Check every invariant, including that the generator settings build.
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda_class", self.lambda_class),
            ("lambda_env", self.lambda_env),
            ("lambda_aux", self.lambda_aux),
            ("lambda_domain", self.lambda_domain),
            ("expert_decay", self.expert_decay),
            ("beta", self.beta),
        ];
        for (name, w) in weights {
            check(w >= 0.0 && w.is_finite(), || format!("{name} = {w} must be finite and ≥ 0"))?;
        }
        for (name, s) in [
            ("step_size", self.step_size),
            ("tta_step_size", self.tta_step_size),
            ("erm_step_size", self.erm_step_size),
        ] {
            check(s > 0.0 && s.is_finite(), || format!("{name} = {s} must be positive"))?;
        }
        check(self.train_fraction > 0.0 && self.holdout_fraction > 0.0, || {
            "train_fraction and holdout_fraction must both be positive".into()
        })?;
        check((self.train_fraction + self.holdout_fraction - 1.0).abs() < 1e-12, || {
            format!(
                "split fractions sum to {}, not 1",
                self.train_fraction + self.holdout_fraction
            )
        })?;
        check(self.n_c > 0 && self.n_b > 0, || "latent blocks must be non-empty".into())?;
        check(self.embedding_dim > 0, || "embedding_dim must be positive".into())?;
        check(self.erm_hidden > 0, || "erm_hidden must be positive".into())?;
        check(self.n_source >= 10 && self.n_target >= 1, || "need at least 10 source and 1 target rows".into())?;
        let n_train = self.n_train();
        check(n_train >= 2 && n_train < self.n_source, || {
            format!("split of {} rows leaves {n_train} for training", self.n_source)
        })?;
        check(!self.variants.is_empty(), || "variants must not be empty".into())?;
        self.tta_optimizer()?;
        self.correction()?;
        self.scm_config()?;
        Ok(())
    }

    /// Number of source rows used for training; the rest is the
    /// calibration holdout.
    pub fn n_train(&self) -> usize {
        (self.n_source as f64 * self.train_fraction).round() as usize
    }

    pub fn tta_optimizer(&self) -> Result<TtaOptimizer> {
        match self.tta_optimizer.as_str() {
            "adam" => Ok(TtaOptimizer::Adam),
            "gd" => Ok(TtaOptimizer::GradientDescent),
            other => Err(BenchError::Config(format!("unknown tta_optimizer {other:?} (adam | gd)"))),
        }
    }

    pub fn correction(&self) -> Result<CorrectionMode> {
        CorrectionMode::from_name(&self.correction_mode).ok_or_else(|| {
            BenchError::Config(format!(
                "unknown correction_mode {:?} (binary_phi | multiclass_ls | none)",
                self.correction_mode
            ))
        })
    }

    /// Adaptation settings for `variant`; `BAG_RE` gets the no-op stage.
    pub fn adapt_config(&self, variant: Variant) -> Result<AdaptConfig> {
        let mut cfg = AdaptConfig {
            epochs: self.tta_epochs,
            step_size: self.tta_step_size,
            batch_size: self.tta_batch_size,
            optimizer: self.tta_optimizer()?,
            trainable: BiasTrainable::default(),
            correction_mode: self.correction()?,
            seed: self.seed,
        };
        if !variant.components().adaptation {
            cfg.epochs = 0;
            cfg.correction_mode = CorrectionMode::None;
        }
        Ok(cfg)
    }

    /// Generator settings mirrored from the flat fields.
    pub fn generator(&self) -> GeneratorSettings {
        GeneratorSettings {
            n_c: self.n_c,
            n_b: self.n_b,
            env_probs: self.env_probs.clone(),
            env_u: self.env_u.clone(),
            env_v: self.env_v.clone(),
            env_sign: self.env_sign.clone(),
            bias_strength: self.bias_strength,
            target_u: self.target_u,
            target_v: self.target_v,
            target_offset: self.target_offset,
            content_sep: self.content_sep,
            label_offset: self.label_offset,
            sigma_y: self.sigma_y,
            sigma_c: self.sigma_c,
            sigma_b: self.sigma_b,
            sigma_x: self.sigma_x,
        }
    }

    pub fn scm_config(&self) -> Result<ScmConfig> {
        self.generator().build(self.mixing_seed).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// The same config with `seed` replaced.
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(TrainConfig::from_json(cfg.to_json().as_bytes()).unwrap(), cfg);
        assert_eq!(TrainConfig::from_json(b"{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for bad in [
            r#"{"lambda2": 1.0}"#,
            r#"{"lambda0": -1.0}"#,
            r#"{"train_fraction": 0.7}"#,
            r#"{"variant": "BAG_XL"}"#,
            r#"{"correction_mode": "phi"}"#,
            r#"{"env_probs": [0.5, 0.6, 0.2]}"#,
            r#"not json"#,
        ] {
            let err = TrainConfig::from_json(bad.as_bytes()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}: {err}");
        }
    }

    #[test]
    fn variant_lattice_is_strict() {
        let full = Variant::Bag.components();
        for v in [Variant::BagVae, Variant::BagRe, Variant::BagTta, Variant::Erm] {
            let c = v.components();
            assert!(full.contains(&c) && c != full, "{v:?}");
            assert!(!c.contains(&full));
        }
        for v in Variant::ALL {
            assert_eq!(Variant::from_tag(v.tag()), Some(v));
        }
    }

    #[test]
    fn re_variant_disables_adaptation() {
        let cfg = TrainConfig::default();
        let a = cfg.adapt_config(Variant::BagRe).unwrap();
        assert_eq!((a.epochs, a.correction_mode), (0, CorrectionMode::None));
        let b = cfg.adapt_config(Variant::Bag).unwrap();
        assert_eq!((b.epochs, b.correction_mode), (30, CorrectionMode::BinaryPhi));
    }
}
