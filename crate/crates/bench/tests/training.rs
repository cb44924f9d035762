//! End-to-end training at the default configuration (one seed).

use adapt::pseudo_label;
use bench::{accuracy, generate_data, run_erm, split_source, train_source, TrainConfig, Variant};
use numkit::LinearProbe;
use scm::{generate, EnvSet};

#[test]
fn default_training_separates_content_from_bias() {
    let cfg = TrainConfig::default();
    let (src, tgt) = generate_data(&cfg, 0).unwrap();
    let fit = train_source(&cfg, &src, Variant::Bag).unwrap();
    assert!(fit.holdout_accuracy >= 0.90, "source holdout accuracy {}", fit.holdout_accuracy);
    assert!(fit.loss_trace.last().unwrap() < fit.loss_trace.first().unwrap());
    assert!(fit.model.calib.is_some(), "calibration failed: {:?}", fit.warnings);

    // Environment information should live in the bias block, not the content block.
    let (train, holdout) = split_source(&cfg, &src).unwrap();
    let n_env = cfg.env_probs.len();
    let (c_tr, b_tr) = fit.model.encode_means(&train.x).unwrap();
    let (c_ho, b_ho) = fit.model.encode_means(&holdout.x).unwrap();
    let acc_b = LinearProbe::fit(&b_tr, &train.e, n_env, 500).unwrap().accuracy(&b_ho, &holdout.e).unwrap();
    let acc_c = LinearProbe::fit(&c_tr, &train.e, n_env, 500).unwrap().accuracy(&c_ho, &holdout.e).unwrap();
    assert!(acc_b - acc_c >= 0.15, "env probe: bias {acc_b}, content {acc_c}");

    // The invariant head transfers to the shifted target about as well as a
    // linear classifier on the true content latents does.
    let (c_src, _) = src.latents.as_ref().unwrap();
    let (c_tgt, _) = tgt.latents.as_ref().unwrap();
    let oracle = LinearProbe::fit(c_src, &src.y, 2, 500).unwrap().accuracy(c_tgt, &tgt.y).unwrap();
    let acc = accuracy(&pseudo_label(&fit.model, &tgt.x).unwrap(), &tgt.y);
    assert!(acc >= oracle - 0.03, "pseudo-label accuracy {acc}, true-content oracle {oracle}");
}

#[test]
fn erm_fits_the_source_but_not_the_target() {
    let cfg = TrainConfig::default();
    let (src, tgt) = generate_data(&cfg, 0).unwrap();
    let fit = run_erm(&cfg, &src).unwrap();
    assert!(fit.holdout_accuracy >= 0.85, "ERM source holdout {}", fit.holdout_accuracy);
    let acc = accuracy(&fit.net.predict(&tgt.x).unwrap().argmax_rows(), &tgt.y);
    assert!((0.30..=0.65).contains(&acc), "ERM target accuracy {acc}");
}

#[test]
fn noiseless_content_gives_near_perfect_pseudo_labels() {
    let cfg = TrainConfig::default();
    let mut scm = cfg.scm_config().unwrap();
    // Validation insists on positive noise; the generator itself accepts zero.
    scm.sigma_c = 0.0;
    scm.sigma_x = 0.0;
    let src = generate(&scm, cfg.n_source, EnvSet::Source, 7).unwrap();
    let tgt = generate(&scm, cfg.n_target, EnvSet::Target, 7).unwrap();
    let fit = train_source(&cfg.with_seed(7), &src, Variant::Bag).unwrap();
    let acc = accuracy(&pseudo_label(&fit.model, &tgt.x).unwrap(), &tgt.y);
    assert!(acc >= 0.99, "noiseless pseudo-label accuracy {acc}");
}
