//! Source training, baselines, ablations and the benchmark harness.
//!
//! A run goes: generate multi-environment source data and a held-out target
//! environment, train the decomposed model on the source ([`train_source`]),
//! calibrate the invariant head's pseudo-labels on a source holdout, adapt
//! the bias head on the unlabelled target and score every stage. The
//! [`Variant`] lattice switches individual components off; [`run_erm`] is the
//! plain-MLP baseline with a matched parameter count.
//!
//! [`run_benchmark`] repeats this over a seed list and aggregates mean ± sample
//! standard deviation; [`write_reports`] emits `report.json` and
//! `summary.csv` whose bytes depend only on the config and seeds.

mod checkpoint;
mod config;
mod error;
mod eval;
mod loss;
mod report;
mod run;
mod train;

pub use checkpoint::{
    from_json as checkpoint_from_json, load_model, save_model, to_json as checkpoint_to_json, Checkpoint, StoredModel,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{Components, TrainConfig, Variant};
pub use error::{BenchError, Result};
pub use eval::{evaluate, evaluate_adapted, Metrics, Stage};
pub use loss::{objective, Batch, LossParts, LossWeights, Objective, SourceModel};
pub use report::{f17, report_csv, report_json, to_json_f17, write_reports, CSV_HEADER, REPORT_FORMAT};
pub use run::{benchmark, generate_data, run_benchmark, run_variant, Failure, RunReport, SeedRun, Stat, VariantSummary};
pub use train::{accuracy, init_erm, init_source_model, run_erm, split_source, train_source, ErmFit, SourceFit};
