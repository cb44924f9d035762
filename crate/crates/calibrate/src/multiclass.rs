use nalgebra::DMatrix;
use numkit::Matrix;

use crate::error::{CalibError, Result};

/// Stopping threshold on the gradient-mapping norm of the simplex solver.
pub const LS_TOL: f64 = 1e-10;
/// Iteration cap of the simplex solver.
pub const LS_MAX_ITER: usize = 10_000;

/// Raw `counts[ŷ][y]` after validating both label sequences.
pub(crate) fn tally(pseudo: &[usize], truth: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if pseudo.len() != truth.len() {
        return Err(CalibError::LengthMismatch { pseudo: pseudo.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Err(CalibError::Empty);
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in pseudo.iter().zip(truth) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= k) {
            return Err(CalibError::LabelRange { label, classes: k });
        }
        counts[p][t] += 1;
    }
    let absent: Vec<usize> = (0..k).filter(|&j| (0..k).all(|i| counts[i][j] == 0)).collect();
    if !absent.is_empty() {
        return Err(CalibError::AbsentClass(absent));
    }
    Ok(counts)
}

/// Class-conditional pseudo-label distribution `eps[i][j] = P(ŷ = i | y = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    /// `K × K`, every column sums to 1.
    pub eps: Matrix,
    /// Raw `counts[ŷ][y]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Wrap a column-stochastic matrix with no supporting counts.
    pub fn from_eps(eps: Matrix) -> Result<Self> {
        let (r, c) = eps.shape();
        if r != c || r == 0 {
            return Err(CalibError::Invalid(format!("confusion matrix must be square, got {r}×{c}")));
        }
        for j in 0..c {
            let col: f64 = (0..r).map(|i| eps.get(i, j)).sum();
            if (col - 1.0).abs() > 1e-10 || (0..r).any(|i| !(0.0..=1.0).contains(&eps.get(i, j))) {
                return Err(CalibError::Invalid(format!("column {j} is not a distribution")));
            }
        }
        Ok(ConfusionMatrix { eps, counts: vec![vec![0; r]; r] })
    }

    pub fn n_classes(&self) -> usize {
        self.eps.rows()
    }

    /// The binary reliability margin generalised: mean diagonal minus the
    /// chance level `1/K`, scaled so `K = 2` gives `h0 + h1 − 1`.
    pub fn margin(&self) -> f64 {
        let k = self.n_classes() as f64;
        let trace: f64 = (0..self.n_classes()).map(|i| self.eps.get(i, i)).sum();
        (trace - 1.0) * 2.0 / k
    }
}

/// Column-wise add-one smoothed frequencies: `(#{ŷ=i, y=j} + 1) / (#{y=j} + K)`.
pub fn estimate_confusion(pseudo: &[usize], truth: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if k == 0 {
        return Err(CalibError::Invalid("zero classes".into()));
    }
    let counts = tally(pseudo, truth, k)?;
    let mut eps = Matrix::zeros(k, k);
    for j in 0..k {
        let n_j: u64 = (0..k).map(|i| counts[i][j]).sum();
        for i in 0..k {
            eps.set(i, j, (counts[i][j] + 1) as f64 / (n_j + k as u64) as f64);
        }
    }
    Ok(ConfusionMatrix { eps, counts })
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// `‖eps·p − e_hat‖₂`.
pub fn simplex_objective(eps: &Matrix, p: &[f64], e_hat: &[f64]) -> f64 {
    (0..eps.rows())
        .map(|i| {
            let r: f64 = eps.row(i).iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - e_hat[i];
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Result of [`solve_simplex_ls`] with its optimality certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub p: Vec<f64>,
    pub iterations: usize,
    /// Norm of the gradient mapping at `p`; zero exactly at the optimum.
    pub grad_norm: f64,
    /// `‖eps·p − e_hat‖₂`.
    pub residual: f64,
}

/// `argmin_{p ∈ Δ} ‖eps·p − e_hat‖₂` by projected gradient descent with the
/// fixed step `1 / ‖eps‖²₂`, stopped when the gradient-mapping norm drops
/// below [`LS_TOL`].
pub fn solve_simplex_ls(eps: &Matrix, e_hat: &[f64]) -> Result<SimplexSolution> {
    let (r, k) = eps.shape();
    if e_hat.len() != r || k == 0 {
        return Err(CalibError::Invalid(format!("{}-vector for a {r}×{k} matrix", e_hat.len())));
    }
    if !eps.is_finite() || e_hat.iter().any(|v| !v.is_finite()) {
        return Err(CalibError::Invalid("non-finite least-squares input".into()));
    }
    let spectral = DMatrix::from_row_slice(r, k, eps.data()).singular_values().max();
    if spectral <= 0.0 {
        return Err(CalibError::Invalid("zero confusion matrix".into()));
    }
    let step = 1.0 / (spectral * spectral);
    // Gradient of ½‖eps·p − e‖² is epsᵀ(eps·p − e).
    let grad = |p: &[f64]| -> Vec<f64> {
        let res: Vec<f64> =
            (0..r).map(|i| eps.row(i).iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - e_hat[i]).collect();
        (0..k).map(|j| (0..r).map(|i| eps.get(i, j) * res[i]).sum()).collect()
    };
    let mut p = vec![1.0 / k as f64; k];
    let mut grad_norm = f64::INFINITY;
    for it in 0..=LS_MAX_ITER {
        let g = grad(&p);
        let moved: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let next = project_simplex(&moved);
        grad_norm = p.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
        if grad_norm < LS_TOL {
            return Ok(SimplexSolution { residual: simplex_objective(eps, &p, e_hat), p, iterations: it, grad_norm });
        }
        if it < LS_MAX_ITER {
            p = next;
        }
    }
    Err(CalibError::NoConvergence {
        iterations: LS_MAX_ITER,
        grad_norm,
        residual: simplex_objective(eps, &p, e_hat),
    })
}

/// Corrected class probabilities from an estimate of `E[ŷ | b]`.
pub fn correct_multiclass(e_hat: &[f64], conf: &ConfusionMatrix) -> Result<Vec<f64>> {
    if e_hat.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CalibError::Invalid(format!("E[ŷ|b] entries must lie in [0, 1], got {e_hat:?}")));
    }
    Ok(solve_simplex_ls(&conf.eps, e_hat)?.p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_cases() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = project_simplex(&[-1.0, 3.0, 0.2, 2.9]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15 && p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn perfect_pseudo_labels_give_near_identity() {
        let truth: Vec<usize> = (0..3000).map(|i| i % 3).collect();
        let c = estimate_confusion(&truth, &truth, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1001.0 / 1003.0 } else { 1.0 / 1003.0 };
                assert!((c.eps.get(i, j) - expect).abs() < 1e-15);
            }
            let col: f64 = (0..3).map(|r| c.eps.get(r, i)).sum();
            assert!((col - 1.0).abs() < 1e-15);
        }
        assert!(matches!(estimate_confusion(&[0, 1], &[0, 0], 2), Err(CalibError::AbsentClass(_))));
    }

    #[test]
    fn identity_eps_returns_e_hat() {
        let eps = ConfusionMatrix::from_eps(Matrix::identity(3)).unwrap();
        let e = [0.2, 0.5, 0.3];
        let p = correct_multiclass(&e, &eps).unwrap();
        for (a, b) in p.iter().zip(&e) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(correct_multiclass(&[1.5, 0.0, 0.0], &eps).is_err());
    }

    #[test]
    fn from_eps_validates_columns() {
        assert!(ConfusionMatrix::from_eps(Matrix::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.5]]).unwrap()).is_err());
        assert!(ConfusionMatrix::from_eps(Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn binary_margin_matches() {
        let eps = Matrix::from_rows(&[vec![0.8, 0.3], vec![0.2, 0.7]]).unwrap();
        let c = ConfusionMatrix::from_eps(eps).unwrap();
        assert!((c.margin() - 0.5).abs() < 1e-15);
    }
}
