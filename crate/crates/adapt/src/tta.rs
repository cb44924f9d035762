use calibrate::{check_informative, correct_multiclass, phi, DELTA_MARGIN};
use numkit::{logit, sigmoid, softmax_vec, Adam, AdamConfig, Matrix, Rng, Sgd};
use predictor::{combine_binary, combine_multiclass, nll_loss, BiasHead};

use crate::error::{AdaptError, Result};
use crate::model::{BagModel, Calibration};

const SHUFFLE_STREAM: u64 = 0x5454_4100;

/// How the adapted bias head's output is corrected for pseudo-label noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionMode {
    /// Binary log-odds correction `φ` from `(h0, h1)`.
    BinaryPhi,
    /// Simplex least squares against the confusion matrix.
    MulticlassLs,
    /// Use the adapted head as is.
    None,
}

impl CorrectionMode {
    pub fn name(self) -> &'static str {
        match self {
            CorrectionMode::BinaryPhi => "binary_phi",
            CorrectionMode::MulticlassLs => "multiclass_ls",
            CorrectionMode::None => "none",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "binary_phi" => Some(CorrectionMode::BinaryPhi),
            "multiclass_ls" => Some(CorrectionMode::MulticlassLs),
            "none" => Some(CorrectionMode::None),
            _ => None,
        }
    }
}

/// Update rule used for the adaptation epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtaOptimizer {
    Adam,
    GradientDescent,
}

/// Which parts of `f_b` are refitted. Everything outside `f_b` is always
/// frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiasTrainable {
    pub domain_classifier: bool,
    pub embeddings: bool,
    pub experts: bool,
}

impl Default for BiasTrainable {
    fn default() -> Self {
        BiasTrainable { domain_classifier: true, embeddings: true, experts: true }
    }
}

/// Test-time adaptation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub step_size: f64,
    /// Mini-batch size; `0` means full batch.
    pub batch_size: usize,
    pub optimizer: TtaOptimizer,
    pub trainable: BiasTrainable,
    pub correction_mode: CorrectionMode,
    /// Seeds the mini-batch order (unused for full-batch runs).
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            epochs: 30,
            step_size: 0.05,
            batch_size: 0,
            optimizer: TtaOptimizer::Adam,
            trainable: BiasTrainable::default(),
            correction_mode: CorrectionMode::BinaryPhi,
            seed: 0,
        }
    }
}

/// Outcome of [`adapt`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptReport {
    /// Stage-1 accuracy on the target (when labels are supplied).
    pub pre_accuracy: Option<f64>,
    /// Accuracy of the adapted, corrected prediction.
    pub post_accuracy: Option<f64>,
    /// Agreement of the pseudo-labels with the true target labels.
    pub pseudo_label_accuracy: Option<f64>,
    /// Calibration margin available to the correction.
    pub calibration_margin: Option<f64>,
    /// Correction actually applied after fallbacks.
    pub correction_used: CorrectionMode,
    /// Full-batch `L_ada` at the start of each epoch.
    pub loss_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Class probabilities together with the correction that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalPrediction {
    pub probs: Matrix,
    pub correction_used: CorrectionMode,
    pub warnings: Vec<String>,
}

/// Invariant-head labels: argmax of `f_c(ĉ)` on posterior content means,
/// ties going to the lower class index.
pub fn pseudo_label(model: &BagModel, x: &Matrix) -> Result<Vec<usize>> {
    let (c, _) = model.encode_means(x)?;
    Ok(model.head.invariant_logits(&c)?.argmax_rows())
}

/// `L_ada`: mean cross-entropy of the bias mixture against the pseudo-labels.
pub fn ada_loss(bias: &BiasHead, b: &Matrix, pseudo: &[usize]) -> Result<f64> {
    Ok(nll_loss(&bias.forward(b)?.log_q, pseudo)?.0)
}

fn freeze(grads: &mut BiasHead, trainable: BiasTrainable) {
    if !trainable.domain_classifier {
        grads.domain_classifier = grads.domain_classifier.zeros_like();
    }
    if !trainable.embeddings {
        grads.embeddings = Matrix::zeros(grads.embeddings.rows(), grads.embeddings.cols());
    }
    if !trainable.experts {
        grads.experts = grads.experts.iter().map(|e| e.zeros_like()).collect();
    }
}

/// Refit `f_b` to pseudo-labels on the target bias codes.
///
/// Returns the adapted head and the full-batch loss recorded at the start of
/// every epoch. `epochs = 0` returns an identical copy.
pub fn tta_finetune(bias: &BiasHead, b: &Matrix, pseudo: &[usize], cfg: &AdaptConfig) -> Result<(BiasHead, Vec<f64>)> {
    if b.rows() != pseudo.len() || b.rows() == 0 {
        return Err(AdaptError::Invalid(format!("{} bias codes for {} pseudo-labels", b.rows(), pseudo.len())));
    }
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(AdaptError::Invalid(format!("step size {} must be positive", cfg.step_size)));
    }
    let mut head = bias.clone();
    let mut adam = Adam::new(AdamConfig::with_step(cfg.step_size));
    let sgd = Sgd { step_size: cfg.step_size };
    let mut rng = Rng::with_stream(cfg.seed, SHUFFLE_STREAM);
    let n = b.rows();
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let full = ada_loss(&head, b, pseudo)?;
        trace.push(full);
        if !full.is_finite() {
            return Err(AdaptError::Diverged { epoch, trace });
        }
        if batch < n {
            rng.shuffle(&mut order);
        }
        for chunk in order.chunks(batch) {
            let (bb, yy) = if batch == n {
                (b.clone(), pseudo.to_vec())
            } else {
                (b.select_rows(chunk), chunk.iter().map(|&i| pseudo[i]).collect())
            };
            let fwd = head.forward(&bb)?;
            let (_, g) = nll_loss(&fwd.log_q, &yy)?;
            let (mut grads, _) = head.backward(&fwd, &g, None)?;
            freeze(&mut grads, cfg.trainable);
            match cfg.optimizer {
                TtaOptimizer::Adam => adam.step(&mut head, &grads)?,
                TtaOptimizer::GradientDescent => sgd.step(&mut head, &grads)?,
            }
        }
    }
    Ok((head, trace))
}

fn resolve(model: &BagModel, requested: CorrectionMode, warnings: &mut Vec<String>) -> CorrectionMode {
    let k = model.n_classes();
    let informative_ls = || match &model.calib {
        Some(c) if c.margin() > DELTA_MARGIN => true,
        _ => false,
    };
    match requested {
        CorrectionMode::None => CorrectionMode::None,
        CorrectionMode::BinaryPhi if k == 2 => match &model.calib {
            Some(Calibration::Binary(c)) if check_informative(c).0 => CorrectionMode::BinaryPhi,
            Some(Calibration::Binary(c)) => {
                warnings.push(format!(
                    "pseudo-labels not informative (h0 + h1 − 1 = {:.4}); using the uncorrected bias head",
                    c.margin()
                ));
                CorrectionMode::None
            }
            _ => {
                warnings.push("binary correction needs a binary calibration; using the uncorrected bias head".into());
                CorrectionMode::None
            }
        },
        CorrectionMode::BinaryPhi | CorrectionMode::MulticlassLs => {
            if informative_ls() {
                if requested == CorrectionMode::BinaryPhi {
                    warnings.push(format!("binary correction requested for {k} classes; using least squares"));
                }
                CorrectionMode::MulticlassLs
            } else {
                warnings.push("no informative calibration; using the uncorrected bias head".into());
                CorrectionMode::None
            }
        }
    }
}

/// Final class probabilities: the (adapted) bias head's estimate corrected
/// for pseudo-label noise, combined with `f_c` and `Pr`.
///
/// Falls back to [`CorrectionMode::None`] with a warning when the
/// calibration is missing or uninformative.
pub fn final_predict(model: &BagModel, x: &Matrix, mode: CorrectionMode) -> Result<FinalPrediction> {
    let mut warnings = Vec::new();
    let used = resolve(model, mode, &mut warnings);
    let bundle = model.predict_bundle(x)?;
    let probs = match used {
        CorrectionMode::None => bundle.combined_probs,
        CorrectionMode::BinaryPhi => {
            let Some(Calibration::Binary(calib)) = &model.calib else { unreachable!("resolved to binary") };
            let prior1 = model.head.prior_logits[1] - model.head.prior_logits[0];
            let mut out = Matrix::zeros(x.rows(), 2);
            for i in 0..x.rows() {
                let lb = phi(logit(bundle.bias_probs.get(i, 1))?, calib)?;
                let inv1 = bundle.inv_logits.get(i, 1) - bundle.inv_logits.get(i, 0);
                let p = combine_binary(sigmoid(lb), inv1, prior1);
                out.set(i, 0, 1.0 - p);
                out.set(i, 1, p);
            }
            out
        }
        CorrectionMode::MulticlassLs => {
            let conf = model.calib.as_ref().expect("resolved to least squares").confusion();
            let prior = softmax_vec(&model.head.prior_logits);
            let mut out = bundle.combined_probs.clone();
            let mut failed = 0usize;
            for i in 0..x.rows() {
                match correct_multiclass(bundle.bias_probs.row(i), &conf) {
                    Ok(p) => {
                        let row = combine_multiclass(&p, &softmax_vec(bundle.inv_logits.row(i)), &prior)?;
                        out.row_mut(i).copy_from_slice(&row);
                    }
                    Err(_) => failed += 1,
                }
            }
            if failed > 0 {
                warnings.push(format!("least-squares correction failed on {failed} rows; kept them uncorrected"));
            }
            out
        }
    };
    Ok(FinalPrediction { probs, correction_used: used, warnings })
}

fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    let pred = probs.argmax_rows();
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

/// The whole adaptation stage on an unlabelled target batch.
///
/// `labels`, when given, are used only for the report's accuracies.
pub fn adapt(model: &BagModel, x: &Matrix, labels: Option<&[usize]>, cfg: &AdaptConfig) -> Result<(BagModel, AdaptReport)> {
    if let Some(y) = labels {
        if y.len() != x.rows() {
            return Err(AdaptError::Invalid(format!("{} labels for {} rows", y.len(), x.rows())));
        }
    }
    let pseudo = pseudo_label(model, x)?;
    let (_, b) = model.encode_means(x)?;
    let (bias, loss_trace) = tta_finetune(&model.head.bias, &b, &pseudo, cfg)?;
    let mut adapted = model.clone();
    adapted.head.bias = bias;
    let fin = final_predict(&adapted, x, cfg.correction_mode)?;
    let report = AdaptReport {
        pre_accuracy: labels.map(|y| model.predict_proba(x).map(|p| accuracy(&p, y))).transpose()?,
        post_accuracy: labels.map(|y| accuracy(&fin.probs, y)),
        pseudo_label_accuracy: labels
            .map(|y| pseudo.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64),
        calibration_margin: model.calib.as_ref().map(Calibration::margin),
        correction_used: fin.correction_used,
        loss_trace,
        warnings: fin.warnings,
    };
    Ok((adapted, report))
}
