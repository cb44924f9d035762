//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in index order and never reduces across
//! workers, so output is independent of the thread schedule. With the
//! `parallel` feature disabled the same functions run as plain loops.
//!
//! The explicitly named `*_seq` / `*_par` variants exist so callers (and the
//! benchmark suite) can compare both strategies within one build.

/// Apply `f` to every index in `0..n`, returning results in index order.
///
/// Uses rayon when the `parallel` feature is enabled.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indices_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indices_seq(n, f)
    }
}

/// Sequential version of [`map_indices`]; always available.
pub fn map_indices_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Rayon version of [`map_indices`].
#[cfg(feature = "parallel")]
pub fn map_indices_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Fill `out` in row chunks of width `width`, calling `f(row_index, row)`.
///
/// Rows are written independently, so the result is identical whichever
/// strategy runs. Small jobs stay sequential to avoid scheduling overhead.
pub fn for_each_row<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= PAR_MIN_ELEMS {
            for_each_row_par(out, width, f);
            return;
        }
    }
    for_each_row_seq(out, width, f);
}

/// Below this many output elements row-parallel loops are not worth spawning.
pub const PAR_MIN_ELEMS: usize = 1 << 14;

/// Sequential version of [`for_each_row`].
pub fn for_each_row_seq<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    if width == 0 {
        return;
    }
    for (i, row) in out.chunks_mut(width).enumerate() {
        f(i, row);
    }
}

/// Rayon version of [`for_each_row`] (no size threshold).
#[cfg(feature = "parallel")]
pub fn for_each_row_par<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    if width == 0 {
        return;
    }
    out.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Whether this build dispatches to rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_indices(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn row_fill_matches_sequential() {
        let width = 7;
        let mut a = vec![0.0; width * 5000];
        let mut b = a.clone();
        let f = |i: usize, row: &mut [f64]| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (i as f64).sin() * j as f64;
            }
        };
        for_each_row(&mut a, width, f);
        for_each_row_seq(&mut b, width, f);
        assert_eq!(a, b);
    }
}
