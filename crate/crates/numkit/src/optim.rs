use crate::error::{NumError, Result};
use crate::params::{num_params, Parameterized};

/// Hyperparameters of [`Adam`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Standard moment decays (0.9, 0.999) and ε = 1e-8.
    pub fn with_step(step_size: f64) -> Self {
        AdamConfig { step_size, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_step(1e-3)
    }
}

/// Bias-corrected adaptive-moment optimizer.
///
/// Moment buffers are flat and follow the parameter visit order; they are
/// sized on the first step and must keep that size afterwards.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// First-moment accumulator (flat, visit order).
    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    /// Second-moment accumulator (flat, visit order).
    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One update `θ ← θ − α · m̂ / (√v̂ + ε)`.
    ///
    /// Fails without touching `params` if any gradient entry is non-finite,
    /// naming the offending tensor.
    pub fn step<P: Parameterized + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let n = num_params(params);
        if num_params(grads) != n {
            return Err(NumError::Dimension {
                op: "Adam::step",
                detail: format!("{} gradients for {n} parameters", num_params(grads)),
            });
        }
        let g = checked_flat(grads)?;
        if self.m.is_empty() {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
        } else if self.m.len() != n {
            return Err(NumError::Dimension {
                op: "Adam::step",
                detail: format!("state sized for {} parameters, got {n}", self.m.len()),
            });
        }
        self.t += 1;
        let AdamConfig { step_size, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut off = 0;
        params.visit_mut(&mut |_, theta| {
            for (k, th) in theta.iter_mut().enumerate() {
                let i = off + k;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *th -= step_size * mh / (vh.sqrt() + eps);
            }
            off += theta.len();
        });
        Ok(())
    }
}

/// Plain gradient descent `θ ← θ − α g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub step_size: f64,
}

impl Sgd {
    pub fn step<P: Parameterized + ?Sized>(&self, params: &mut P, grads: &P) -> Result<()> {
        let n = num_params(params);
        if num_params(grads) != n {
            return Err(NumError::Dimension {
                op: "Sgd::step",
                detail: format!("{} gradients for {n} parameters", num_params(grads)),
            });
        }
        let g = checked_flat(grads)?;
        let mut off = 0;
        params.visit_mut(&mut |_, theta| {
            for (k, th) in theta.iter_mut().enumerate() {
                *th -= self.step_size * g[off + k];
            }
            off += theta.len();
        });
        Ok(())
    }
}

fn checked_flat<P: Parameterized + ?Sized>(grads: &P) -> Result<Vec<f64>> {
    let mut flat = Vec::new();
    let mut bad: Option<String> = None;
    grads.visit(&mut |name, s| {
        if bad.is_none() && s.iter().any(|x| !x.is_finite()) {
            bad = Some(name.to_string());
        }
        flat.extend_from_slice(s);
    });
    match bad {
        Some(name) => Err(NumError::NonFinite { what: format!("gradient of {name}") }),
        None => Ok(flat),
    }
}
