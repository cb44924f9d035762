//! `bag`: generate data, train, adapt, evaluate and benchmark from the
//! command line.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use adapt::{adapt, CorrectionMode};
use bench::{
    evaluate_adapted, load_model, save_model, benchmark, train_source, run_erm, BenchError, Checkpoint, Metrics,
    Result, StoredModel, TrainConfig, Variant,
};
use clap::{Parser, Subcommand, ValueEnum};
use scm::{generate, EnvSet, LabeledDataset};

#[derive(Parser)]
#[command(name = "bag", version, about = "Bias-aware generalization on synthetic multi-environment data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Set {
    Source,
    Target,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from the configured generator.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Source environments or the held-out target environment.
        #[arg(long, value_enum, default_value = "source")]
        set: Set,
        /// Row count (defaults to n_source / n_target from the config).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the configured variant on a source dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt a trained model's bias head to an unlabelled target dataset.
    Adapt {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print accuracy, per-class accuracy and confusion counts as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run every configured variant over a seed list and write reports.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds, e.g. `0,1,2,3,4`.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_data(path: &PathBuf) -> Result<LabeledDataset> {
    LabeledDataset::load(path).map_err(|e| match e {
        scm::ScmError::Io(source) => BenchError::Io { path: path.clone(), source },
        other => BenchError::Data(other),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed, set, n } => {
            let cfg = TrainConfig::load(&config)?;
            let (set, default_n) = match set {
                Set::Source => (EnvSet::Source, cfg.n_source),
                Set::Target => (EnvSet::Target, cfg.n_target),
            };
            let data = generate(&cfg.scm_config()?, n.unwrap_or(default_n), set, seed)?;
            data.save(&out).map_err(|e| match e {
                scm::ScmError::Io(source) => BenchError::Io { path: out.clone(), source },
                other => BenchError::Data(other),
            })?;
            eprintln!("wrote {} rows to {}", data.len(), out.display());
        }
        Command::Train { config, data, out } => {
            let cfg = TrainConfig::load(&config)?;
            let data = load_data(&data)?;
            let (model, holdout) = if cfg.variant == Variant::Erm {
                let fit = run_erm(&cfg, &data)?;
                (StoredModel::Erm(fit.net), fit.holdout_accuracy)
            } else {
                let fit = train_source(&cfg, &data, cfg.variant)?;
                for w in &fit.warnings {
                    eprintln!("warning: {w}");
                }
                (StoredModel::Bag(fit.model), fit.holdout_accuracy)
            };
            save_model(&out, &Checkpoint { model, config: cfg, adapted: false })?;
            eprintln!("holdout accuracy {holdout:.4}; checkpoint written to {}", out.display());
        }
        Command::Adapt { ckpt, target, out } => {
            let ck = load_model(&ckpt)?;
            let StoredModel::Bag(model) = &ck.model else {
                return Err(BenchError::Config("ERM checkpoints have no adaptation stage".into()));
            };
            let data = load_data(&target)?;
            let acfg = ck.config.adapt_config(ck.config.variant)?;
            let (adapted, report) = adapt(model, &data.x, None, &acfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "adapted for {} epochs; correction {}; frozen parameters unchanged: {}",
                report.loss_trace.len(),
                report.correction_used.name(),
                adapted.frozen_hash() == model.frozen_hash()
            );
            save_model(&out, &Checkpoint { model: StoredModel::Bag(adapted), config: ck.config.clone(), adapted: true })?;
        }
        Command::Eval { ckpt, data } => {
            let ck = load_model(&ckpt)?;
            let data = load_data(&data)?;
            let metrics = match &ck.model {
                StoredModel::Erm(net) => Metrics::from_probs(&net.predict(&data.x)?, &data.y)?,
                StoredModel::Bag(model) => {
                    let mode = if ck.adapted { ck.config.correction()? } else { CorrectionMode::None };
                    evaluate_adapted(model, &data, mode)?
                }
            };
            println!("{}", serde_json::to_string_pretty(&metrics).expect("metrics serialize"));
        }
        Command::Bench { config, seeds, out } => {
            let report = benchmark(&config, &seeds, &out)?;
            for s in &report.summaries {
                match s.target_post_acc {
                    Some(st) => eprintln!(
                        "{:8} target accuracy {:.4} ± {:.4} over {} seed(s)",
                        s.variant.tag(),
                        st.mean,
                        st.std.unwrap_or(0.0),
                        s.completed
                    ),
                    None => eprintln!("{:8} no completed seeds", s.variant.tag()),
                }
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wall clock {:.1} s; reports in {}", report.wall_clock_seconds, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
