use adapt::{BagModel, Calibration};
use calibrate::{estimate_binary, estimate_confusion};
use disentangle::VaeParams;
use numkit::{log_softmax_rows, log_softmax_rows_backward, Activation, Adam, AdamConfig, Matrix, Mlp, Rng};
use predictor::{nll_loss, DecomposedHead};
use scm::LabeledDataset;

use crate::config::{TrainConfig, Variant};
use crate::error::{BenchError, Result};
use crate::loss::{objective, Batch, LossWeights, SourceModel};

const INIT_STREAM: u64 = 0x1217;
const NOISE_STREAM: u64 = 0x0153;
const ORDER_STREAM: u64 = 0x0bde;
const ERM_STREAM: u64 = 0x0e77;

/// A trained decomposed model with its training record.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFit {
    pub model: BagModel,
    /// `L_all` per epoch (mean over mini-batches).
    pub loss_trace: Vec<f64>,
    /// Stage-1 accuracy on the calibration holdout.
    pub holdout_accuracy: f64,
    pub warnings: Vec<String>,
}

/// The baseline network with its training record.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmFit {
    pub net: Mlp,
    pub loss_trace: Vec<f64>,
    pub holdout_accuracy: f64,
}

/// Split source data into the training part and the calibration holdout.
pub fn split_source(cfg: &TrainConfig, data: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    let n_train = (data.len() as f64 * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train >= data.len() {
        return Err(BenchError::Config(format!(
            "{} source rows cannot be split with train_fraction {}",
            data.len(),
            cfg.train_fraction
        )));
    }
    Ok(data.split_at(n_train))
}

/// Fraction of predictions equal to the labels.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64
}

fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    if batch_size == 0 || batch_size >= n {
        return vec![(0..n).collect()];
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Fresh Stage-1 parameters for `variant` (one expert for `BAG_TTA`).
pub fn init_source_model(cfg: &TrainConfig, n_x: usize, n_classes: usize, n_envs: usize, variant: Variant) -> Result<SourceModel> {
    let mut rng = Rng::with_stream(cfg.seed, INIT_STREAM);
    let vae = VaeParams::init(n_x, cfg.n_c, cfg.n_b, &cfg.encoder_hidden, cfg.beta, &mut rng)?;
    let m = if variant.components().expert_mixture { n_envs } else { 1 };
    let head = DecomposedHead::init(cfg.n_c, cfg.n_b, n_classes, m, cfg.embedding_dim, &mut rng)?;
    Ok(SourceModel { vae, head })
}

/// Stage 1 on the source data: joint training of encoder, decoder, `f_c`,
/// the bias head and `Pr`, then calibration of the invariant head's
/// pseudo-labels on the held-out source split.
pub fn train_source(cfg: &TrainConfig, source: &LabeledDataset, variant: Variant) -> Result<SourceFit> {
    if variant == Variant::Erm {
        return Err(BenchError::Config("ERM has no decomposed model; use run_erm".into()));
    }
    let (train, holdout) = split_source(cfg, source)?;
    let n_envs = train.n_envs();
    if n_envs < 2 {
        return Err(BenchError::Config(format!("source data spans {n_envs} environment(s); need at least 2")));
    }
    let k = train.n_classes();
    let mut model = init_source_model(cfg, train.n_x(), k, n_envs, variant)?;
    model.head.set_prior_from_labels(&train.y)?;

    let mut weights = LossWeights::from_config(cfg);
    if !variant.components().vae_objective {
        weights.vae = 0.0;
    }
    let mut adam = Adam::new(AdamConfig::with_step(cfg.step_size));
    let mut noise_rng = Rng::with_stream(cfg.seed, NOISE_STREAM);
    let mut order_rng = Rng::with_stream(cfg.seed, ORDER_STREAM);
    let n_z = cfg.n_c + cfg.n_b;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let batches = epoch_batches(train.len(), cfg.batch_size, &mut order_rng);
        for idx in &batches {
            let sub;
            let part = if idx.len() == train.len() {
                &train
            } else {
                sub = train.select(idx);
                &sub
            };
            let noise = Matrix::from_fn(part.len(), n_z, |_, _| noise_rng.normal());
            let batch = Batch { x: &part.x, y: &part.y, e: &part.e, n_envs };
            let obj = objective(&model, batch, &noise, &weights)?;
            if !obj.value.is_finite() {
                trace.push(obj.value);
                return Err(BenchError::Diverged { epoch, loss: obj.value, trace });
            }
            sum += obj.value;
            adam.step(&mut model, &obj.grads)?;
        }
        trace.push(sum / batches.len() as f64);
    }

    let mut warnings = Vec::new();
    let provisional = BagModel::new(model.vae.clone(), model.head.clone(), None)?;
    let pseudo = adapt::pseudo_label(&provisional, &holdout.x)?;
    let calib = if k == 2 {
        estimate_binary(&pseudo, &holdout.y).map(Calibration::Binary)
    } else {
        estimate_confusion(&pseudo, &holdout.y, k).map(Calibration::Multiclass)
    };
    let calib = match calib {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("no calibration: {e}"));
            None
        }
    };
    let model = BagModel::new(model.vae, model.head, calib)?;
    let holdout_accuracy = accuracy(&model.predict_proba(&holdout.x)?.argmax_rows(), &holdout.y);
    Ok(SourceFit { model, loss_trace: trace, holdout_accuracy, warnings })
}

/// Baseline MLP `n_x → hidden (ReLU) → K`.
pub fn init_erm(cfg: &TrainConfig, n_x: usize, n_classes: usize) -> Result<Mlp> {
    let mut rng = Rng::with_stream(cfg.seed, ERM_STREAM);
    Ok(Mlp::init(&[n_x, cfg.erm_hidden, n_classes], &[Activation::Relu, Activation::Identity], &mut rng)?)
}

/// Empirical risk minimisation on `x → y` with the same training split.
pub fn run_erm(cfg: &TrainConfig, source: &LabeledDataset) -> Result<ErmFit> {
    let (train, holdout) = split_source(cfg, source)?;
    let mut net = init_erm(cfg, train.n_x(), train.n_classes())?;
    let mut adam = Adam::new(AdamConfig::with_step(cfg.erm_step_size));
    let mut order_rng = Rng::with_stream(cfg.seed, ORDER_STREAM);
    let mut trace = Vec::with_capacity(cfg.erm_epochs);
    for epoch in 0..cfg.erm_epochs {
        let batches = epoch_batches(train.len(), cfg.batch_size, &mut order_rng);
        let mut sum = 0.0;
        for idx in &batches {
            let (x, y) = if idx.len() == train.len() {
                (train.x.clone(), train.y.clone())
            } else {
                (train.x.select_rows(idx), idx.iter().map(|&i| train.y[i]).collect())
            };
            let (logits, cache) = net.forward(&x)?;
            let ls = log_softmax_rows(&logits);
            let (loss, g) = nll_loss(&ls, &y)?;
            if !loss.is_finite() {
                trace.push(loss);
                return Err(BenchError::Diverged { epoch, loss, trace });
            }
            sum += loss;
            let grads = net.backward(&cache, &log_softmax_rows_backward(&ls, &g))?;
            adam.step(&mut net, &grads.params)?;
        }
        trace.push(sum / batches.len() as f64);
    }
    let holdout_accuracy = accuracy(&net.predict(&holdout.x)?.argmax_rows(), &holdout.y);
    Ok(ErmFit { net, loss_trace: trace, holdout_accuracy })
}
