use nalgebra::DMatrix;
use numkit::{Matrix, Rng};

use crate::{Result, ScmError};

/// Stream of the mixing-matrix draw, kept apart from data streams.
const MIXING_STREAM: u64 = 0x4d49_5800;

/// The held-out environment: its embedding and per-label bias offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEnv {
    pub embedding: Vec<f64>,
    /// `bias_table[y]` is added to the embedding for label `y`.
    pub bias_table: [Vec<f64>; 2],
}

/// Ground-truth parameters of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmConfig {
    pub env_probs: Vec<f64>,
    pub env_embeddings: Vec<Vec<f64>>,
    pub label_weights: Vec<f64>,
    pub label_offset: f64,
    pub sigma_y: f64,
    pub content_anchors: [Vec<f64>; 2],
    pub sigma_c: f64,
    /// `bias_table[e][y]`.
    pub bias_table: Vec<[Vec<f64>; 2]>,
    pub sigma_b: f64,
    /// `(n_c + n_b) × (n_c + n_b)` map from latents to observations.
    pub mixing: Matrix,
    pub sigma_x: f64,
    pub target: TargetEnv,
}

impl ScmConfig {
    pub fn n_envs(&self) -> usize {
        self.env_probs.len()
    }

    pub fn n_c(&self) -> usize {
        self.content_anchors[0].len()
    }

    pub fn n_b(&self) -> usize {
        self.label_weights.len()
    }

    pub fn n_x(&self) -> usize {
        self.mixing.rows()
    }

    /// Environment embedding and bias table for index `e`; `e == n_envs()`
    /// addresses the target environment.
    pub fn env(&self, e: usize) -> (&[f64], &[Vec<f64>; 2]) {
        if e == self.n_envs() {
            (&self.target.embedding, &self.target.bias_table)
        } else {
            (&self.env_embeddings[e], &self.bias_table[e])
        }
    }

    /// Check every structural invariant; the error names the first violation.
    pub fn validate(&self) -> Result<()> {
        self.check(true)
    }

    /// Structural checks used by the generator itself, which also accepts
    /// `sigma_c = 0` so the fully noiseless chain can be exercised.
    pub(crate) fn check(&self, content_noise_required: bool) -> Result<()> {
        let bad = |m: String| Err(ScmError::Config(m));
        let m = self.n_envs();
        if m == 0 {
            return bad("at least one source environment is required".into());
        }
        if self.env_probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return bad(format!("environment probabilities must be positive: {:?}", self.env_probs));
        }
        let total: f64 = self.env_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("environment probabilities sum to {total}, not 1"));
        }
        let (nc, nb) = (self.n_c(), self.n_b());
        if nc == 0 || nb == 0 {
            return bad("content and bias blocks must be non-empty".into());
        }
        if self.content_anchors[1].len() != nc {
            return bad("content anchors differ in length".into());
        }
        if self.content_anchors[0] == self.content_anchors[1] {
            return bad("content anchors c0 and c1 must differ".into());
        }
        if self.env_embeddings.len() != m || self.bias_table.len() != m {
            return bad(format!(
                "{m} environments but {} embeddings and {} bias rows",
                self.env_embeddings.len(),
                self.bias_table.len()
            ));
        }
        let rows = self
            .env_embeddings
            .iter()
            .chain(self.bias_table.iter().flatten())
            .chain(std::iter::once(&self.target.embedding))
            .chain(self.target.bias_table.iter());
        for v in rows {
            if v.len() != nb {
                return bad(format!("bias-space vector of length {} (expected {nb})", v.len()));
            }
        }
        for (name, s) in [
            ("sigma_y", self.sigma_y),
            ("sigma_b", self.sigma_b),
            ("sigma_x", self.sigma_x),
        ] {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(format!("{name} must be a finite value ≥ 0, got {s}"));
            }
        }
        let sigma_c_ok = if content_noise_required { self.sigma_c > 0.0 } else { self.sigma_c >= 0.0 };
        if !sigma_c_ok || !self.sigma_c.is_finite() {
            return bad(format!("sigma_c must be positive, got {}", self.sigma_c));
        }
        let nz = nc + nb;
        if self.mixing.shape() != (nz, nz) {
            return bad(format!("mixing matrix is {:?}, expected {nz}x{nz}", self.mixing.shape()));
        }
        let cond = condition_number(&self.mixing);
        if !(cond < 1e6) {
            return bad(format!("mixing matrix condition number {cond:.3e} exceeds 1e6"));
        }
        Ok(())
    }
}

/// Ratio of the largest to the smallest singular value (∞ when singular).
pub(crate) fn condition_number(m: &Matrix) -> f64 {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let sv = dm.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Random rotation: Q factor of a Gaussian matrix with the signs of R's
/// diagonal folded in, which makes the draw Haar-distributed.
pub(crate) fn random_rotation(n: usize, rng: &mut Rng) -> Matrix {
    let a = DMatrix::from_fn(n, n, |_, _| rng.normal());
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    Matrix::from_fn(n, n, |i, j| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * s
    })
}

/// Scalar knobs from which a full [`ScmConfig`] is built.
///
/// The bias space uses three designated axes: `d` (bias–label direction,
/// axis 0), `u` (environment position, axis 1) and `v` (label-prior
/// direction, axis 2). Remaining axes carry pure noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSettings {
    pub n_c: usize,
    pub n_b: usize,
    pub env_probs: Vec<f64>,
    /// Position of each source environment along `u`.
    pub env_u: Vec<f64>,
    /// Label-prior shift of each source environment along `v`.
    pub env_v: Vec<f64>,
    /// `+1` where label 1 sits at `+a·d`, `−1` where the relation is reversed.
    pub env_sign: Vec<f64>,
    /// Magnitude `a` of the label-dependent bias offset.
    pub bias_strength: f64,
    pub target_u: f64,
    pub target_v: f64,
    /// Shift of the target environment along `d`.
    pub target_offset: f64,
    /// Distance between the two content anchors.
    pub content_sep: f64,
    pub label_offset: f64,
    pub sigma_y: f64,
    pub sigma_c: f64,
    pub sigma_b: f64,
    pub sigma_x: f64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            n_c: 5,
            n_b: 5,
            env_probs: vec![0.4, 0.4, 0.2],
            env_u: vec![-2.0, 0.0, 2.0],
            env_v: vec![-0.4, 0.4, -0.5],
            env_sign: vec![1.0, 1.0, -1.0],
            bias_strength: 1.0,
            target_u: 3.0,
            target_v: 0.0,
            target_offset: 1.75,
            content_sep: 1.6,
            label_offset: 0.0,
            sigma_y: 1.0,
            sigma_c: 1.0,
            sigma_b: 0.5,
            sigma_x: 0.1,
        }
    }
}

impl GeneratorSettings {
    /// Build and validate the full config; `mixing_seed` drives the rotation.
    pub fn build(&self, mixing_seed: u64) -> Result<ScmConfig> {
        let m = self.env_probs.len();
        if self.env_u.len() != m || self.env_v.len() != m || self.env_sign.len() != m {
            return Err(ScmError::Config(format!(
                "{m} environment probabilities but {}/{}/{} positions/priors/signs",
                self.env_u.len(),
                self.env_v.len(),
                self.env_sign.len()
            )));
        }
        if self.n_b < 3 {
            return Err(ScmError::Config(format!(
                "the bias block needs at least 3 dimensions, got {}",
                self.n_b
            )));
        }
        let nb = self.n_b;
        let axis = |k: usize, s: f64| {
            let mut v = vec![0.0; nb];
            v[k] = s;
            v
        };
        let add = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let a = self.bias_strength;

        let env_embeddings = (0..m).map(|k| add(axis(1, self.env_u[k]), axis(2, self.env_v[k]))).collect();
        let bias_table = (0..m)
            .map(|k| {
                let s = self.env_sign[k];
                [axis(0, -s * a), axis(0, s * a)]
            })
            .collect();
        let target = TargetEnv {
            embedding: add(
                add(axis(1, self.target_u), axis(2, self.target_v)),
                axis(0, self.target_offset),
            ),
            bias_table: [axis(0, a), axis(0, -a)],
        };
        let half = self.content_sep / 2.0 / (self.n_c as f64).sqrt();
        let c1 = vec![half; self.n_c];
        let c0 = vec![-half; self.n_c];
        let mut rng = Rng::with_stream(mixing_seed, MIXING_STREAM);
        let cfg = ScmConfig {
            env_probs: self.env_probs.clone(),
            env_embeddings,
            label_weights: axis(2, 1.0),
            label_offset: self.label_offset,
            sigma_y: self.sigma_y,
            content_anchors: [c0, c1],
            sigma_c: self.sigma_c,
            bias_table,
            sigma_b: self.sigma_b,
            mixing: random_rotation(self.n_c + self.n_b, &mut rng),
            sigma_x: self.sigma_x,
            target,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The default three-environment generator with a seeded mixing rotation.
pub fn default_config(seed: u64) -> ScmConfig {
    GeneratorSettings::default().build(seed).expect("default generator settings are valid")
}
