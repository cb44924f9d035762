use std::path::Path;
use std::time::Instant;

use adapt::{adapt, final_predict, CorrectionMode};
use numkit::par;
use scm::{generate, EnvSet, LabeledDataset};
use serde::Serialize;

use crate::config::{TrainConfig, Variant};
use crate::error::{BenchError, Result};
use crate::report::write_reports;
use crate::train::{accuracy, run_erm, train_source};

/// One variant trained and evaluated on one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub variant: Variant,
    pub seed: u64,
    pub source_val_acc: f64,
    pub target_pre_acc: f64,
    pub target_post_acc: f64,
    /// Post-adaptation accuracy with the correction switched off.
    pub target_uncorrected_acc: f64,
    /// Agreement of the invariant head's pseudo-labels with the target labels.
    pub pseudo_label_acc: Option<f64>,
    pub calibration_margin: Option<f64>,
    /// Correction applied after fallbacks (`none` for ERM and `BAG_RE`).
    pub correction: String,
    /// Whether every non-`f_b` parameter survived adaptation bit-for-bit.
    pub frozen_unchanged: Option<bool>,
    pub loss_trace: Vec<f64>,
    pub tta_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Mean and sample standard deviation over completed seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Absent with fewer than two seeds.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Stat { mean, std })
    }
}

/// Aggregate of one variant over the seed list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub completed: usize,
    pub source_val_acc: Option<Stat>,
    pub target_pre_acc: Option<Stat>,
    pub target_post_acc: Option<Stat>,
}

/// A seed that failed for one variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub variant: Variant,
    pub seed: u64,
    pub error: String,
}

/// Everything a benchmark run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    /// Ordered by variant (config order), then seed (list order).
    pub runs: Vec<SeedRun>,
    pub summaries: Vec<VariantSummary>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
    /// Elapsed time of the whole run. Kept out of the report files so that
    /// they stay a pure function of the config and the seed list.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    /// Mean post-adaptation target accuracy of `variant`.
    pub fn target_mean(&self, variant: Variant) -> Option<f64> {
        self.summary(variant)?.target_post_acc.map(|s| s.mean)
    }
}

/// Source (train + holdout) and target data for one seed.
pub fn generate_data(cfg: &TrainConfig, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let scm = cfg.scm_config()?;
    Ok((generate(&scm, cfg.n_source, EnvSet::Source, seed)?, generate(&scm, cfg.n_target, EnvSet::Target, seed)?))
}

/// Train `variant` on the source data and evaluate it on the target before
/// and after the adaptation stage. `cfg.seed` seeds initialisation.
pub fn run_variant(variant: Variant, cfg: &TrainConfig, source: &LabeledDataset, target: &LabeledDataset) -> Result<SeedRun> {
    if variant == Variant::Erm {
        let fit = run_erm(cfg, source)?;
        let acc = accuracy(&fit.net.predict(&target.x)?.argmax_rows(), &target.y);
        return Ok(SeedRun {
            variant,
            seed: cfg.seed,
            source_val_acc: fit.holdout_accuracy,
            target_pre_acc: acc,
            target_post_acc: acc,
            target_uncorrected_acc: acc,
            pseudo_label_acc: None,
            calibration_margin: None,
            correction: "none".into(),
            frozen_unchanged: None,
            loss_trace: fit.loss_trace,
            tta_trace: Vec::new(),
            warnings: Vec::new(),
        });
    }
    let fit = train_source(cfg, source, variant)?;
    let acfg = cfg.adapt_config(variant)?;
    let (adapted, rep) = adapt(&fit.model, &target.x, Some(&target.y), &acfg)?;
    let uncorrected = final_predict(&adapted, &target.x, CorrectionMode::None)?;
    let mut warnings = fit.warnings;
    warnings.extend(rep.warnings);
    Ok(SeedRun {
        variant,
        seed: cfg.seed,
        source_val_acc: fit.holdout_accuracy,
        target_pre_acc: rep.pre_accuracy.expect("labels supplied"),
        target_post_acc: rep.post_accuracy.expect("labels supplied"),
        target_uncorrected_acc: accuracy(&uncorrected.probs.argmax_rows(), &target.y),
        pseudo_label_acc: rep.pseudo_label_accuracy,
        calibration_margin: rep.calibration_margin,
        correction: rep.correction_used.name().into(),
        frozen_unchanged: Some(adapted.frozen_hash() == fit.model.frozen_hash()),
        loss_trace: fit.loss_trace,
        tta_trace: rep.loss_trace,
        warnings,
    })
}

/// Run every configured variant on every seed and aggregate.
///
/// Jobs may execute in parallel; results are collected in (variant, seed)
/// order so the report does not depend on scheduling. Failed jobs are
/// recorded and excluded from the aggregates.
pub fn run_benchmark(cfg: &TrainConfig, seeds: &[u64]) -> Result<RunReport> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(BenchError::Config("empty seed list".into()));
    }
    let start = Instant::now();
    let jobs: Vec<(Variant, u64)> =
        cfg.variants.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let results = par::map_indices(jobs.len(), |j| {
        let (variant, seed) = jobs[j];
        let seeded = cfg.with_seed(seed);
        generate_data(&seeded, seed).and_then(|(src, tgt)| run_variant(variant, &seeded, &src, &tgt))
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (&(variant, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => runs.push(r),
            Err(e) => {
                warnings.push(format!("{} seed {seed} failed: {e}", variant.tag()));
                failures.push(Failure { variant, seed, error: e.to_string() });
            }
        }
    }
    let summaries = cfg
        .variants
        .iter()
        .map(|&variant| {
            let mine: Vec<&SeedRun> = runs.iter().filter(|r| r.variant == variant).collect();
            let col = |f: fn(&SeedRun) -> f64| Stat::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            VariantSummary {
                variant,
                completed: mine.len(),
                source_val_acc: col(|r| r.source_val_acc),
                target_pre_acc: col(|r| r.target_pre_acc),
                target_post_acc: col(|r| r.target_post_acc),
            }
        })
        .collect();
    Ok(RunReport {
        config: cfg.clone(),
        seeds: seeds.to_vec(),
        runs,
        summaries,
        failures,
        warnings,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Load the config file, run the benchmark and write `report.json` and
/// `summary.csv` into `out_dir`.
pub fn benchmark(config_path: impl AsRef<Path>, seeds: &[u64], out_dir: impl AsRef<Path>) -> Result<RunReport> {
    let cfg = TrainConfig::load(config_path)?;
    let report = run_benchmark(&cfg, seeds)?;
    write_reports(&report, out_dir)?;
    Ok(report)
}
