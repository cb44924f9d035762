//! End-to-end gradient and invariant checks for the disentangling objective.

use disentangle::{
    cross_moment_penalty, independence_penalty, independence_penalty_grad, vae_loss, vae_loss_grad,
    LatentBatch, Pooling, VaeParams,
};
use numkit::{assign, flatten, grad_check, Matrix, Rng};
use proptest::prelude::*;

/// `λ0·L_vae + λ1·L_ind` on posterior means, with fixed reparameterization
/// noise so the objective is a deterministic function of the parameters.
fn objective(vae: &VaeParams, x: &Matrix, y: &[usize], u: &Matrix, l0: f64, l1: f64) -> (f64, VaeParams) {
    let fwd = vae.forward_train(x, u).unwrap();
    let vl = vae_loss_grad(x, &fwd.x_hat, &fwd.latents, vae.beta).unwrap();
    let c = fwd.latents.content_means();
    let b = fwd.latents.bias_means();
    let ind = independence_penalty_grad(&c, &b, y).unwrap();
    let mut d_mean = vl.d_mean.clone();
    d_mean.scale(l0);
    let mut d_logvar = vl.d_logvar.clone();
    d_logvar.scale(l0);
    let mut d_xhat = vl.d_xhat.clone();
    d_xhat.scale(l0);
    let nc = vae.n_c();
    for i in 0..x.rows() {
        for j in 0..nc {
            let v = d_mean.get(i, j) + l1 * ind.d_c.get(i, j);
            d_mean.set(i, j, v);
        }
        for j in 0..vae.n_b() {
            let v = d_mean.get(i, nc + j) + l1 * ind.d_t.get(i, j);
            d_mean.set(i, nc + j, v);
        }
    }
    let grads = vae.backward(&fwd, &d_xhat, &d_mean, &d_logvar).unwrap();
    (l0 * vl.value + l1 * ind.value, grads)
}

fn check(hidden: &[usize], seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let vae = VaeParams::init(6, 2, 3, hidden, 1.0, &mut rng).unwrap();
    let x = Matrix::from_fn(16, 6, |_, _| rng.normal());
    let u = Matrix::from_fn(16, 5, |_, _| rng.normal());
    let y: Vec<usize> = (0..16).map(|i| i % 2).collect();
    let theta = flatten(&vae);
    grad_check(
        |t| {
            let mut v = vae.clone();
            assign(&mut v, t)?;
            let (val, g) = objective(&v, &x, &y, &u, 1.0, 10.0);
            Ok((val, flatten(&g)))
        },
        &theta,
        1e-5,
    )
    .unwrap()
}

#[test]
fn full_objective_passes_grad_check() {
    for seed in 0..3 {
        assert!(check(&[], seed) < 1e-5);
        assert!(check(&[4], seed) < 1e-5);
    }
}

#[test]
fn clamped_logvars_get_no_gradient() {
    let mut rng = Rng::new(11);
    let mut vae = VaeParams::init(4, 1, 1, &[], 1.0, &mut rng).unwrap();
    // Push the raw log-variance of latent 0 far below the clamp.
    vae.encoder.layers_mut()[0].bias[2] = -100.0;
    let x = Matrix::from_fn(8, 4, |_, _| rng.normal());
    let u = Matrix::from_fn(8, 2, |_, _| rng.normal());
    let y: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let (_, g) = objective(&vae, &x, &y, &u, 1.0, 1.0);
    assert_eq!(g.encoder.layers()[0].bias[2], 0.0);
    assert!(g.encoder.layers()[0].weight.row(2).iter().all(|&v| v == 0.0));
    let theta = flatten(&vae);
    let err = grad_check(
        |t| {
            let mut v = vae.clone();
            assign(&mut v, t)?;
            let (val, g) = objective(&v, &x, &y, &u, 1.0, 1.0);
            Ok((val, flatten(&g)))
        },
        &theta,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5);
}

#[test]
fn zero_weights_reduce_to_parts() {
    let mut rng = Rng::new(12);
    let vae = VaeParams::init(6, 2, 3, &[], 1.0, &mut rng).unwrap();
    let x = Matrix::from_fn(10, 6, |_, _| rng.normal());
    let u = Matrix::from_fn(10, 5, |_, _| rng.normal());
    let y: Vec<usize> = (0..10).map(|i| (i / 3) % 2).collect();
    let fwd = vae.forward_train(&x, &u).unwrap();
    let lv = vae_loss(&x, &fwd.x_hat, &fwd.latents, 1.0).unwrap();
    let li = independence_penalty(&fwd.latents.content_means(), &fwd.latents.bias_means(), &y).unwrap();
    assert_eq!(objective(&vae, &x, &y, &u, 1.0, 0.0).0, lv);
    assert_eq!(objective(&vae, &x, &y, &u, 0.0, 1.0).0, li);
}

fn batch_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<usize>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-3.0f64..3.0, n * 2),
            prop::collection::vec(-3.0f64..3.0, n * 3),
            prop::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #[test]
    fn vae_loss_is_nonnegative(
        x in prop::collection::vec(-5.0f64..5.0, 12),
        xh in prop::collection::vec(-5.0f64..5.0, 12),
        m in prop::collection::vec(-5.0f64..5.0, 8),
        lv in prop::collection::vec(-20.0f64..20.0, 8),
        beta in 0.0f64..3.0,
    ) {
        let x = Matrix::from_vec(4, 3, x).unwrap();
        let xh = Matrix::from_vec(4, 3, xh).unwrap();
        let lat = LatentBatch::from_parts(
            Matrix::from_vec(4, 2, m).unwrap(),
            Matrix::from_vec(4, 2, lv).unwrap(),
            1,
        ).unwrap();
        prop_assert!(vae_loss(&x, &xh, &lat, beta).unwrap() >= 0.0);
    }

    #[test]
    fn penalty_nonnegative_and_shift_invariant(
        (n, c, b, y) in batch_strategy(),
        shifts in prop::collection::vec(-10.0f64..10.0, 9),
    ) {
        let c = Matrix::from_vec(n, 2, c).unwrap();
        let b = Matrix::from_vec(n, 3, b).unwrap();
        let base = independence_penalty(&c, &b, &y).unwrap();
        prop_assert!(base >= 0.0);
        let mut shifted = b.clone();
        for (i, &label) in y.iter().enumerate() {
            for j in 0..3 {
                let v = shifted.get(i, j) + shifts[label * 3 + j];
                shifted.set(i, j, v);
            }
        }
        let moved = independence_penalty(&c, &shifted, &y).unwrap();
        prop_assert!((moved - base).abs() <= 1e-9 * (1.0 + base));
        let per_class = cross_moment_penalty(&c, &b, &y, Pooling::PerClass).unwrap().value;
        prop_assert!(per_class >= 0.0);
    }
}
