use crate::activation::{log_softmax_rows, log_softmax_rows_backward, Activation};
use crate::error::{NumError, Result};
use crate::matrix::Matrix;
use crate::mlp::Mlp;
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng;

/// Multinomial logistic regression on standardized features.
///
/// Used as a diagnostic: how much label or environment information a block
/// of features carries linearly.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    net: Mlp,
}

impl LinearProbe {
    /// Fit by full-batch Adam on mean cross-entropy (`epochs` steps).
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, epochs: usize) -> Result<Self> {
        if x.rows() != labels.len() || x.rows() == 0 {
            return Err(NumError::Dimension {
                op: "LinearProbe::fit",
                detail: format!("{} rows for {} labels", x.rows(), labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(NumError::Invalid(format!("label {bad} with {n_classes} classes")));
        }
        let n = x.rows() as f64;
        let mean: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
        let scale: Vec<f64> = (0..x.cols())
            .map(|j| {
                let var = (0..x.rows()).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut probe = LinearProbe {
            mean,
            scale,
            net: Mlp::init(&[x.cols(), n_classes], &[Activation::Identity], &mut Rng::new(0))?,
        };
        let xs = probe.standardize(x);
        let mut opt = Adam::new(AdamConfig::with_step(0.05));
        for _ in 0..epochs {
            let (logits, cache) = probe.net.forward(&xs)?;
            let ls = log_softmax_rows(&logits);
            let mut g = Matrix::zeros(x.rows(), n_classes);
            for (i, &y) in labels.iter().enumerate() {
                g.set(i, y, -1.0 / n);
            }
            let dz = log_softmax_rows_backward(&ls, &g);
            let grads = probe.net.backward(&cache, &dz)?;
            opt.step(&mut probe.net, &grads.params)?;
        }
        Ok(probe)
    }

    fn standardize(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| (x.get(i, j) - self.mean[j]) / self.scale[j])
    }

    /// Predicted class per row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.net.predict(&self.standardize(x))?.argmax_rows())
    }

    /// Fraction of rows predicted correctly.
    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_is_learned() {
        let x = Matrix::from_fn(100, 2, |i, j| if j == 0 { i as f64 - 49.5 } else { 0.0 });
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        let p = LinearProbe::fit(&x, &y, 2, 300).unwrap();
        assert_eq!(p.accuracy(&x, &y).unwrap(), 1.0);
    }
}
