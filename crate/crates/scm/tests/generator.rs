//! Monte-Carlo, inversion and probe oracles for the generator.

use nalgebra::DMatrix;
use numkit::{LinearProbe, Matrix, Rng};
use scm::{
    default_config, generate, sample_bias, sample_content, sample_environment, sample_label,
    EnvSet, GeneratorSettings,
};

#[test]
fn environment_frequencies_match_probabilities() {
    let mut rng = Rng::new(1);
    let n = 100_000;
    let ones = (0..n).filter(|_| sample_environment(&[0.5, 0.5], &mut rng) == 1).count();
    assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
}

#[test]
fn environment_draws_are_reproducible() {
    let draw = || {
        let mut rng = Rng::new(77);
        (0..200).map(|_| sample_environment(&[0.2, 0.3, 0.5], &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn zero_score_label_is_a_fair_coin() {
    let mut rng = Rng::new(2);
    let n = 100_000;
    let ones: usize = (0..n).map(|_| sample_label(&[0.0, 0.0], &[1.0, 1.0], 0.0, 1.0, &mut rng)).sum();
    assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
}

#[test]
fn content_mean_converges_to_anchor() {
    let anchors = [vec![-0.5, 0.25, 1.0], vec![0.5, -0.25, -1.0]];
    let mut rng = Rng::new(3);
    let n = 100_000;
    let sigma = 1.5;
    let mut sum = [0.0; 3];
    for _ in 0..n {
        for (s, v) in sum.iter_mut().zip(sample_content(1, &anchors, sigma, &mut rng)) {
            *s += v;
        }
    }
    for (s, a) in sum.iter().zip(&anchors[1]) {
        assert!((s / n as f64 - a).abs() < 4.0 * sigma / (n as f64).sqrt());
    }
}

#[test]
fn content_distribution_is_environment_invariant() {
    let cfg = default_config(0);
    let ds = generate(&cfg, 30_000, EnvSet::Source, 4).unwrap();
    let (c, _) = ds.latents.as_ref().unwrap();
    for y in 0..2 {
        let mut means = Vec::new();
        let mut counts = Vec::new();
        for e in 0..cfg.n_envs() {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == y && ds.e[i] == e).collect();
            let sub = c.select_rows(&rows);
            means.push(sub.col_sums().iter().map(|s| s / rows.len() as f64).collect::<Vec<_>>());
            counts.push(rows.len() as f64);
        }
        for e in 1..cfg.n_envs() {
            let tol = 4.0 * cfg.sigma_c * (1.0 / counts[0] + 1.0 / counts[e]).sqrt();
            for j in 0..cfg.n_c() {
                assert!((means[0][j] - means[e][j]).abs() < tol, "y={y} e={e} coord {j}");
            }
        }
    }
}

#[test]
fn bias_mean_shift_and_covariance() {
    let cfg = default_config(0);
    let mut rng = Rng::new(5);
    let n = 50_000;
    let nb = cfg.n_b();
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        draws.push(sample_bias(1, 0, &cfg, &mut rng));
    }
    let mean: Vec<f64> = (0..nb).map(|j| draws.iter().map(|b| b[j]).sum::<f64>() / n as f64).collect();
    for j in 0..nb {
        let expect = cfg.env_embeddings[1][j] + cfg.bias_table[1][0][j];
        assert!((mean[j] - expect).abs() < 4.0 * cfg.sigma_b / (n as f64).sqrt());
    }
    let s2 = cfg.sigma_b * cfg.sigma_b;
    for j in 0..nb {
        for k in 0..nb {
            let cov = draws.iter().map(|b| (b[j] - mean[j]) * (b[k] - mean[k])).sum::<f64>()
                / (n - 1) as f64;
            let expect = if j == k { s2 } else { 0.0 };
            assert!((cov - expect).abs() < 0.01, "cov[{j}][{k}] = {cov}");
        }
    }

    // Moving from env 0 to env 2 at fixed y shifts the mean by the embedding difference.
    let mut r2 = Rng::new(6);
    let mut cfg0 = cfg.clone();
    cfg0.sigma_b = 0.0;
    let a = sample_bias(0, 1, &cfg0, &mut r2);
    let b = sample_bias(2, 1, &cfg0, &mut r2);
    for j in 0..nb {
        let expect = (cfg.env_embeddings[2][j] + cfg.bias_table[2][1][j])
            - (cfg.env_embeddings[0][j] + cfg.bias_table[0][1][j]);
        assert!((b[j] - a[j] - expect).abs() < 1e-15);
    }
}

#[test]
fn content_and_bias_are_independent_within_cells() {
    let cfg = default_config(1);
    let ds = generate(&cfg, 40_000, EnvSet::Source, 7).unwrap();
    let (c, b) = ds.latents.as_ref().unwrap();
    for e in 0..cfg.n_envs() {
        for y in 0..2 {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == y && ds.e[i] == e).collect();
            let n = rows.len() as f64;
            let cs = c.select_rows(&rows);
            let bs = b.select_rows(&rows);
            let cm: Vec<f64> = cs.col_sums().iter().map(|s| s / n).collect();
            let bm: Vec<f64> = bs.col_sums().iter().map(|s| s / n).collect();
            for j in 0..cfg.n_c() {
                for k in 0..cfg.n_b() {
                    let cov = (0..rows.len())
                        .map(|i| (cs.get(i, j) - cm[j]) * (bs.get(i, k) - bm[k]))
                        .sum::<f64>()
                        / n;
                    assert!(cov.abs() < 5.0 / n.sqrt(), "cell ({e},{y}) cov[{j}][{k}] = {cov}");
                }
            }
        }
    }
}

fn noiseless(envs: usize) -> scm::ScmConfig {
    let mut s = GeneratorSettings::default();
    s.env_probs = vec![1.0 / envs as f64; envs];
    s.env_u = vec![0.5; envs];
    s.env_v = vec![0.3; envs];
    s.env_sign = vec![1.0; envs];
    let mut cfg = s.build(3).unwrap();
    cfg.sigma_x = 0.0;
    cfg.sigma_b = 0.0;
    cfg.sigma_y = 0.0;
    cfg.sigma_c = 0.0;
    cfg
}

#[test]
fn noiseless_single_environment_collapses() {
    let ds = generate(&noiseless(1), 500, EnvSet::Source, 8).unwrap();
    let mut distinct: Vec<Vec<u64>> = (0..ds.len())
        .map(|i| ds.x.row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    distinct.sort();
    distinct.dedup();
    assert!(distinct.len() <= 2);
}

#[test]
fn latents_recovered_by_inverting_the_mixing() {
    let mut cfg = default_config(4);
    cfg.sigma_x = 0.0;
    let ds = generate(&cfg, 200, EnvSet::Source, 9).unwrap();
    let (c, b) = ds.latents.as_ref().unwrap();
    let m = DMatrix::from_row_slice(10, 10, cfg.mixing.data());
    let inv = m.try_inverse().unwrap();
    for i in 0..ds.len() {
        let x = nalgebra::DVector::from_row_slice(ds.x.row(i));
        let z = &inv * x;
        for j in 0..5 {
            assert!((z[j] - c.get(i, j)).abs() < 1e-10);
            assert!((z[5 + j] - b.get(i, j)).abs() < 1e-10);
        }
    }
}

#[test]
fn generation_is_bit_reproducible() {
    let cfg = default_config(0);
    let a = generate(&cfg, 5000, EnvSet::Source, 11).unwrap();
    let b = generate(&cfg, 5000, EnvSet::Source, 11).unwrap();
    assert_eq!(a.len(), 5000);
    assert_eq!(a, b);
    let c = generate(&cfg, 5000, EnvSet::Source, 12).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn file_round_trip_with_latents() {
    let cfg = default_config(0);
    let ds = generate(&cfg, 64, EnvSet::Target, 13).unwrap();
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();
    assert!(buf.starts_with(b"bagset v1 n=64 nx=10 nc=5 nb=5\n"));
    let back = scm::LabeledDataset::read_from(&buf[..]).unwrap();
    assert_eq!(back, ds);
}

fn block(ds: &scm::LabeledDataset, bias: bool) -> Matrix {
    let (c, b) = ds.latents.as_ref().unwrap();
    if bias { b.clone() } else { c.clone() }
}

#[test]
fn bias_probe_reverses_on_target_and_content_probe_transfers() {
    for seed in 0..3 {
        let cfg = default_config(seed);
        // Large evaluation sets keep the sampling error of the accuracy gap
        // (about 0.5 points) well inside the three-point tolerance.
        let src = generate(&cfg, 25_000, EnvSet::Source, 100 + seed).unwrap();
        let (train, val) = src.split_at(5000);
        let tgt = generate(&cfg, 20_000, EnvSet::Target, 200 + seed).unwrap();

        let pb = LinearProbe::fit(&block(&train, true), &train.y, 2, 500).unwrap();
        let acc_b = pb.accuracy(&block(&tgt, true), &tgt.y).unwrap();
        assert!(acc_b < 0.5, "seed {seed}: bias probe scores {acc_b} on target");

        let pc = LinearProbe::fit(&block(&train, false), &train.y, 2, 500).unwrap();
        let acc_src = pc.accuracy(&block(&val, false), &val.y).unwrap();
        let acc_tgt = pc.accuracy(&block(&tgt, false), &tgt.y).unwrap();
        assert!((acc_src - acc_tgt).abs() <= 0.03, "seed {seed}: {acc_src} vs {acc_tgt}");
    }
}
