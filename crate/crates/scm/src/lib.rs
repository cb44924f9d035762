//! Structural-causal-model generator for multi-environment binary data.
//!
//! Each row follows the causal chain
//!
//! ```text
//! e ~ Categorical(π)            environment
//! y = 1{wᵀE_e + b0 + ξ > 0}     label, ξ ~ N(0, σ_y²)
//! c = c_y + ε                   content, ε ~ N(0, σ_c² I)   (depends on y only)
//! b = E_e + C[e][y] + ζ         bias,    ζ ~ N(0, σ_b² I)   (depends on e and y)
//! x = M [c; b] + η              observation, η ~ N(0, σ_x² I)
//! ```
//!
//! Source rows draw `e` from π; target rows all come from one held-out
//! environment whose bias table reverses the dominant bias–label direction.

mod config;
mod dataset;
mod sample;

pub use config::{default_config, GeneratorSettings, ScmConfig, TargetEnv};
pub use dataset::LabeledDataset;
pub use sample::{generate, sample_bias, sample_content, sample_environment, sample_label, EnvSet};

use thiserror::Error;

/// Errors from configuration, generation and dataset I/O.
#[derive(Debug, Error)]
pub enum ScmError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("dataset format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Num(#[from] numkit::NumError),
}

pub type Result<T> = std::result::Result<T, ScmError>;
