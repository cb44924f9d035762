use adapt::{adapt, final_predict, AdaptConfig, AdaptReport, BagModel, CorrectionMode};
use numkit::Matrix;
use scm::LabeledDataset;
use serde::Serialize;

use crate::error::{BenchError, Result};

/// Classification metrics of one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Recall per true class (`None` for classes absent from the labels).
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[pred][truth]` counts.
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    /// Metrics from hard predictions.
    pub fn from_predictions(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Self> {
        if truth.is_empty() {
            return Err(BenchError::Config("cannot evaluate an empty dataset".into()));
        }
        if pred.len() != truth.len() {
            return Err(BenchError::Config(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= n_classes || t >= n_classes {
                return Err(BenchError::Config(format!("label {} outside 0..{n_classes}", p.max(t))));
            }
            confusion[p][t] += 1;
        }
        let correct: u64 = (0..n_classes).map(|k| confusion[k][k]).sum();
        let per_class_accuracy = (0..n_classes)
            .map(|t| {
                let total: u64 = (0..n_classes).map(|p| confusion[p][t]).sum();
                (total > 0).then(|| confusion[t][t] as f64 / total as f64)
            })
            .collect();
        Ok(Metrics { accuracy: correct as f64 / truth.len() as f64, per_class_accuracy, confusion })
    }

    /// Metrics from class-probability rows (argmax, ties to the lower class).
    pub fn from_probs(probs: &Matrix, truth: &[usize]) -> Result<Self> {
        Self::from_predictions(&probs.argmax_rows(), truth, probs.cols())
    }
}

/// Whether a model is scored as trained or after the adaptation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    PreTta,
    PostTta(AdaptConfig),
}

/// Score `model` on a labelled dataset. `PostTta` runs pseudo-labelling,
/// bias-head refitting and correction on the dataset's inputs first (labels
/// are used only for scoring).
pub fn evaluate(model: &BagModel, data: &LabeledDataset, stage: Stage) -> Result<(Metrics, Option<AdaptReport>)> {
    if data.is_empty() {
        return Err(BenchError::Config("cannot evaluate an empty dataset".into()));
    }
    match stage {
        Stage::PreTta => Ok((Metrics::from_probs(&model.predict_proba(&data.x)?, &data.y)?, None)),
        Stage::PostTta(cfg) => {
            let (adapted, report) = adapt(model, &data.x, None, &cfg)?;
            let fin = final_predict(&adapted, &data.x, cfg.correction_mode)?;
            Ok((Metrics::from_probs(&fin.probs, &data.y)?, Some(report)))
        }
    }
}

/// Score an already adapted model with the given correction.
pub fn evaluate_adapted(model: &BagModel, data: &LabeledDataset, mode: CorrectionMode) -> Result<Metrics> {
    let fin = final_predict(model, &data.x, mode)?;
    Metrics::from_probs(&fin.probs, &data.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct_scores_one() {
        let y = [0, 1, 1, 0, 2];
        let m = Metrics::from_predictions(&y, &y, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class_accuracy.iter().all(|a| *a == Some(1.0)));
    }

    #[test]
    fn constant_predictor_on_balanced_labels_scores_half() {
        let y: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let m = Metrics::from_predictions(&[1; 100], &y, 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.per_class_accuracy, vec![Some(0.0), Some(1.0)]);
    }

    #[test]
    fn hand_counted_fixture() {
        // Correct rows: 0, 2, 3, 6, 9 → 5 / 10. Truth 0 appears 6 times (3 hit),
        // truth 1 four times (2 hit).
        let pred = [0, 1, 1, 0, 0, 1, 1, 0, 1, 0];
        let truth = [0, 0, 1, 0, 1, 0, 1, 1, 0, 0];
        let m = Metrics::from_predictions(&pred, &truth, 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.confusion, vec![vec![3, 2], vec![3, 2]]);
        assert_eq!(m.per_class_accuracy, vec![Some(0.5), Some(0.5)]);
    }

    #[test]
    fn empty_and_mismatched_inputs_are_rejected() {
        assert!(Metrics::from_predictions(&[], &[], 2).is_err());
        assert!(Metrics::from_predictions(&[0], &[0, 1], 2).is_err());
        assert!(Metrics::from_predictions(&[2], &[0], 2).is_err());
    }
}
