use numkit::Matrix;

use crate::error::{dim, DisentangleError, Result};

/// How per-sample cross moments `c_i t_iᵀ` are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// One moment matrix over the whole batch: `‖(1/n) Σ_i c_i r_iᵀ‖²_F`.
    Pooled,
    /// One moment matrix per label, each normalised by its class size:
    /// `Σ_y ‖(1/n_y) Σ_{i: y_i = y} c_i r_iᵀ‖²_F`.
    PerClass,
}

/// Value of a cross-moment penalty and its gradients with respect to both
/// inputs.
#[derive(Debug, Clone)]
pub struct PenaltyGrad {
    pub value: f64,
    pub d_c: Matrix,
    pub d_t: Matrix,
}

fn class_index(y: &[usize]) -> Vec<Vec<usize>> {
    let k = y.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &label) in y.iter().enumerate() {
        members[label].push(i);
    }
    members
}

fn check(op: &'static str, c: &Matrix, t: &Matrix, y: &[usize]) -> Result<()> {
    if c.rows() != t.rows() || c.rows() != y.len() {
        return Err(dim(op, format!("{} / {} rows for {} labels", c.rows(), t.rows(), y.len())));
    }
    if y.is_empty() {
        return Err(DisentangleError::EmptyBatch(op));
    }
    Ok(())
}

/// `t` with each row's class mean removed: `r_i = t_i − mean{t_j : y_j = y_i}`.
pub fn class_residuals(t: &Matrix, y: &[usize]) -> Result<Matrix> {
    if t.rows() != y.len() {
        return Err(dim("class_residuals", format!("{} rows for {} labels", t.rows(), y.len())));
    }
    let mut r = t.clone();
    for rows in class_index(y).iter().filter(|r| !r.is_empty()) {
        let mut mean = vec![0.0; t.cols()];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(t.row(i)) {
                *m += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        for &i in rows {
            for (v, m) in r.row_mut(i).iter_mut().zip(&mean) {
                *v -= m * inv;
            }
        }
    }
    Ok(r)
}

/// Squared Frobenius norm of the label-conditional cross moment between `c`
/// and the class-centred `t`, with gradients.
///
/// With `t = b` and [`Pooling::Pooled`] this is [`independence_penalty`].
/// The same machinery scores dependence on any per-sample signal, such as a
/// one-hot environment indicator.
pub fn cross_moment_penalty(c: &Matrix, t: &Matrix, y: &[usize], pooling: Pooling) -> Result<PenaltyGrad> {
    check("cross_moment_penalty", c, t, y)?;
    let r = class_residuals(t, y)?;
    let n = y.len();
    let mut d_c = Matrix::zeros(c.rows(), c.cols());
    let mut g = Matrix::zeros(t.rows(), t.cols());
    let groups: Vec<Vec<usize>> = match pooling {
        Pooling::Pooled => vec![(0..n).collect()],
        Pooling::PerClass => class_index(y).into_iter().filter(|g| !g.is_empty()).collect(),
    };
    let norm = |rows: &[usize]| match pooling {
        Pooling::Pooled => n as f64,
        Pooling::PerClass => rows.len() as f64,
    };
    let mut value = 0.0;
    for rows in &groups {
        let scale = 1.0 / norm(rows);
        let s = c.select_rows(rows).matmul_tn(&r.select_rows(rows))?.map(|v| v * scale);
        value += s.frobenius_sq();
        // ∂‖S‖²/∂c_i = (2/n)·S r_i and ∂‖S‖²/∂r_i = (2/n)·Sᵀ c_i.
        let dc = r.select_rows(rows).matmul_nt(&s)?;
        let dr = c.select_rows(rows).matmul(&s)?;
        for (k, &i) in rows.iter().enumerate() {
            for (dst, v) in d_c.row_mut(i).iter_mut().zip(dc.row(k)) {
                *dst = 2.0 * scale * v;
            }
            for (dst, v) in g.row_mut(i).iter_mut().zip(dr.row(k)) {
                *dst = 2.0 * scale * v;
            }
        }
    }
    if !value.is_finite() {
        return Err(DisentangleError::NonFinite("cross_moment_penalty"));
    }
    // r_i depends on every t_j of its class through the class mean, so the
    // chain rule centres the residual gradient within each class.
    let d_t = class_residuals(&g, y)?;
    Ok(PenaltyGrad { value, d_c, d_t })
}

/// `‖(1/n) Σ_i c_i (b_i − E[b | y_i])ᵀ‖²_F` with within-batch class means.
pub fn independence_penalty(c: &Matrix, b: &Matrix, y: &[usize]) -> Result<f64> {
    Ok(cross_moment_penalty(c, b, y, Pooling::Pooled)?.value)
}

/// [`independence_penalty`] with gradients with respect to `c` and `b`.
pub fn independence_penalty_grad(c: &Matrix, b: &Matrix, y: &[usize]) -> Result<PenaltyGrad> {
    cross_moment_penalty(c, b, y, Pooling::Pooled)
}
