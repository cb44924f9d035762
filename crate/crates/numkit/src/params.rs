use crate::error::{NumError, Result};

/// A value that exposes its learnable tensors in a fixed order.
///
/// Gradients are represented with the same type as the parameters they
/// belong to, so optimizers and the gradient checker only need this trait.
/// Names are dotted paths (`"encoder.layer0.weight"`) used in error messages
/// and checkpoints.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));
}

/// Concatenate all tensors in visit order.
pub fn flatten<P: Parameterized + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit(&mut |_, s| out.extend_from_slice(s));
    out
}

/// Total scalar count.
pub fn num_params<P: Parameterized + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit(&mut |_, s| n += s.len());
    n
}

/// Overwrite all tensors from a flat buffer produced by [`flatten`].
pub fn assign<P: Parameterized + ?Sized>(p: &mut P, flat: &[f64]) -> Result<()> {
    let need = num_params(p);
    if flat.len() != need {
        return Err(NumError::Dimension {
            op: "assign",
            detail: format!("{} values for {need} parameters", flat.len()),
        });
    }
    let mut off = 0;
    p.visit_mut(&mut |_, s| {
        s.copy_from_slice(&flat[off..off + s.len()]);
        off += s.len();
    });
    Ok(())
}

/// Implementations for plain vectors make small ad-hoc parameter sets easy.
impl Parameterized for Vec<f64> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("theta", self);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("theta", self);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two named tensors, to check ordering across tensors.
    struct Pair {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl Parameterized for Pair {
        fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
            f("a", &self.a);
            f("b", &self.b);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
            f("a", &mut self.a);
            f("b", &mut self.b);
        }
    }

    #[test]
    fn flatten_follows_visit_order_and_assign_inverts_it() {
        let mut p = Pair { a: vec![1.0, 2.0], b: vec![3.0] };
        assert_eq!(flatten(&p), vec![1.0, 2.0, 3.0]);
        assert_eq!(num_params(&p), 3);
        assign(&mut p, &[7.0, 8.0, 9.0]).unwrap();
        assert_eq!((p.a.as_slice(), p.b.as_slice()), (&[7.0, 8.0][..], &[9.0][..]));
    }

    #[test]
    fn assign_rejects_wrong_length() {
        let mut p = Pair { a: vec![0.0; 2], b: vec![0.0] };
        assert!(matches!(assign(&mut p, &[1.0; 4]), Err(NumError::Dimension { .. })));
        assert_eq!(flatten(&p), vec![0.0; 3]);
    }
}
