//! Property tests for the numerical invariants the rest of the workspace
//! relies on.

use numkit::{
    log_softmax_vec, logit, par, sigmoid, softmax_rows, Adam, AdamConfig, Matrix, Rng,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let cols = 1 + v.len() % 5;
        let rows = v.len() / cols;
        prop_assume!(rows > 0);
        let m = Matrix::from_vec(rows, cols, v[..rows * cols].to_vec()).unwrap();
        let s = softmax_rows(&m);
        for i in 0..rows {
            let total: f64 = s.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_inverts_sigmoid(l in -30.0f64..9.0) {
        // Above ~9 the spacing of f64 just below 1 is coarser than 1e-12
        // in logit units, so the round trip cannot be exact there.
        prop_assert!((logit(sigmoid(l)).unwrap() - l).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_monotone(a in -40.0f64..40.0, d in 1e-6f64..5.0) {
        prop_assert!(sigmoid(a + d) >= sigmoid(a));
    }

    #[test]
    fn log_softmax_is_shift_invariant(v in prop::collection::vec(-20.0f64..20.0, 2..6), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        for (a, b) in log_softmax_vec(&v).iter().zip(log_softmax_vec(&shifted)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn adam_is_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut rng = Rng::new(seed);
            let mut theta: Vec<f64> = rng.normal_vec(4);
            let mut opt = Adam::new(AdamConfig::with_step(0.01));
            for _ in 0..20 {
                let g: Vec<f64> = theta.iter().map(|x| x.sin()).collect();
                opt.step(&mut theta, &g).unwrap();
            }
            theta
        };
        let (a, b) = (run(), run());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn matmul_is_schedule_independent(seed in 0u64..200) {
        let mut rng = Rng::new(seed);
        let a = Matrix::from_fn(300, 40, |_, _| rng.normal());
        let b = Matrix::from_fn(40, 60, |_, _| rng.normal());
        let c = a.matmul(&b).unwrap();
        let mut seq = vec![0.0; 300 * 60];
        par::for_each_row_seq(&mut seq, 60, |i, row| {
            for (j, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for p in 0..40 {
                    let x = a.get(i, p);
                    if x != 0.0 {
                        acc += x * b.get(p, j);
                    }
                }
                *o = acc;
            }
        });
        prop_assert_eq!(c.data(), &seq[..]);
    }
}

#[test]
fn adam_reaches_tight_loss_on_quadratic_in_500_steps() {
    let mut theta = vec![2.0, -1.5, 0.5];
    let mut opt = Adam::new(AdamConfig::with_step(0.1));
    for _ in 0..500 {
        let g: Vec<f64> = theta.iter().map(|x| x).copied().collect();
        opt.step(&mut theta, &g).unwrap();
    }
    let loss: f64 = 0.5 * theta.iter().map(|x| x * x).sum::<f64>();
    assert!(loss < 1e-6, "loss {loss}");
}

#[test]
fn normal_draws_have_unit_variance() {
    let mut rng = Rng::new(42);
    let xs = rng.normal_vec(100_000);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!(mean.abs() < 0.02);
    assert!((var - 1.0).abs() < 0.02);
}
