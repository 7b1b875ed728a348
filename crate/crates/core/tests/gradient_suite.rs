//! Finite-difference verification of every differentiable operation and of
//! the full toy transformer with cross-entropy.
//!
//! The numeric oracle only evaluates forward passes (central differences at
//! step 1e-5), so it is independent of the backward rules under test.
//! Smooth single ops must agree to 1e-6 relative error, composites to 1e-4.

use auscult::autodiff::{grad_check, Tape, Tensor, Value};
use auscult::dsp::{MelConfig, Spectrogram};
use auscult::model::{batch_eval, init_params, ForwardMode, ModelConfig};
use auscult::seeds;
use rand::Rng;

const STEP: f64 = 1e-5;
const SMOOTH_TOL: f64 = 1e-6;
const COMPOSITE_TOL: f64 = 1e-4;

fn random_value(shape: Vec<usize>, seed: u64) -> Value {
    let mut rng = seeds::rng(seed);
    let n: usize = shape.iter().product();
    Value::from_vec(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect())
}

/// Reduces a tensor to a scalar through a fixed random weighting so every
/// output coordinate influences the loss.
fn weighted_sum(tape: &Tape, t: &Tensor, seed: u64) -> Tensor {
    let shape = t.shape();
    t.mul(&tape.constant(random_value(shape, seed)))
        .unwrap()
        .sum()
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let params = vec![random_value(vec![3, 4], 1), random_value(vec![4, 2], 2)];
    let report = grad_check(
        |tape, p| Ok(weighted_sum(tape, &p[0].matmul(&p[1])?, 3)),
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let params = vec![random_value(vec![5], 4)];
    let report = grad_check(
        |tape, p| Ok(weighted_sum(tape, &p[0].softmax(0)?, 5)),
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);

    // and along rows of a matrix
    let params = vec![random_value(vec![3, 4], 6)];
    let report = grad_check(
        |tape, p| Ok(weighted_sum(tape, &p[0].softmax(1)?, 7)),
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let params = vec![
        random_value(vec![4, 6], 8),
        random_value(vec![6], 9),
        random_value(vec![6], 10),
    ];
    let report = grad_check(
        |tape, p| Ok(weighted_sum(tape, &p[0].layer_norm(&p[1], &p[2], 1e-5)?, 11)),
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
}

#[test]
fn gelu_gradient_matches_finite_differences_on_grid() {
    // an even grid over [-3, 3]
    let grid: Vec<f64> = (0..25).map(|i| -3.0 + 0.25 * i as f64).collect();
    let params = vec![Value::vector(&grid)];
    let report = grad_check(
        |tape, p| Ok(weighted_sum(tape, &p[0].gelu(), 12)),
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);

    // monotone on its increasing region (the exact-CDF form has a shallow
    // dip with minimum near -0.751, so test from -0.7 upward)
    let grid: Vec<f64> = (0..38).map(|i| -0.7 + 0.1 * i as f64).collect();
    let tape = Tape::new();
    let y = tape.param(Value::vector(&grid)).gelu().value();
    for pair in y.data().windows(2) {
        assert!(pair[1] >= pair[0]);
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let params = vec![random_value(vec![3, 4], 13)];
    let report = grad_check(
        |_tape, p| p[0].cross_entropy(&[2, 0, 3]),
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
}

#[test]
fn structural_ops_gradient_matches_finite_differences() {
    // transpose, concat, slice, bias add, scale, elementwise arithmetic
    let params = vec![
        random_value(vec![2, 3], 14),
        random_value(vec![2, 3], 15),
        random_value(vec![3], 16),
    ];
    let report = grad_check(
        |tape, p| {
            let cat = tape.concat_rows(&[p[0].clone(), p[1].clone()])?; // 4x3
            let biased = cat.add_bias(&p[2])?;
            let t = biased.transpose()?; // 3x4
            let left = t.slice_cols(0..2)?; // 3x2
            let right = t.slice_cols(2..4)?; // 3x2
            let mixed = left.mul(&right)?.scale(0.7).add(&left.scale(-0.3))?;
            Ok(weighted_sum(tape, &mixed, 17))
        },
        &params,
        STEP,
        SMOOTH_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
}

#[test]
fn attention_block_gradient_matches_finite_differences() {
    // single-head attention: softmax(x Wq (x Wk)^T / sqrt(d)) (x Wv)
    let d = 6usize;
    let params = vec![
        random_value(vec![4, d], 18),
        random_value(vec![d, d], 19),
        random_value(vec![d, d], 20),
        random_value(vec![d, d], 21),
    ];
    let scale = 1.0 / (d as f64).sqrt();
    let report = grad_check(
        |tape, p| {
            let q = p[0].matmul(&p[1])?;
            let k = p[0].matmul(&p[2])?;
            let v = p[0].matmul(&p[3])?;
            let attn = q.matmul(&k.transpose()?)?.scale(scale).softmax(1)?;
            Ok(weighted_sum(tape, &attn.matmul(&v)?, 22))
        },
        &params,
        STEP,
        COMPOSITE_TOL,
    )
    .unwrap();
    assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
}

/// Relative error with an absolute floor, matching the op-level checks.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1.0, f64::max(a.abs(), n.abs()))
}

#[test]
fn full_toy_transformer_gradient_matches_finite_differences() {
    let config = ModelConfig {
        patch_size: 16,
        embed_dim: 8,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        num_classes: 4,
        input_bins: 32,
        input_frames: 32,
        dropout: 0.0,
    };
    let mut params = init_params(&config, 31).unwrap();

    let mut rng = seeds::rng(32);
    let spec_values: Vec<f64> = (0..32 * 32).map(|_| rng.random_range(-2.0..2.0)).collect();
    let spec = Spectrogram {
        bins: 32,
        frames: 32,
        values: Value::matrix(32, 32, spec_values),
        hop_seconds: 0.01,
        mel: MelConfig::default(),
    };
    let batch = [(&spec, 2usize)];
    let mode = ForwardMode::Eval;

    let analytic = batch_eval(&params, &config, &batch, &mode).unwrap().grads;

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut worst: (f64, String, usize) = (0.0, String::new(), 0);
    for name in &names {
        for i in 0..params.get(name).unwrap().len() {
            let original = params.get(name).unwrap().data()[i];
            params.get_mut(name).unwrap().data_mut()[i] = original + STEP;
            let up = batch_eval(&params, &config, &batch, &mode).unwrap().loss;
            params.get_mut(name).unwrap().data_mut()[i] = original - STEP;
            let down = batch_eval(&params, &config, &batch, &mode).unwrap().loss;
            params.get_mut(name).unwrap().data_mut()[i] = original;

            let numeric = (up - down) / (2.0 * STEP);
            let err = rel_err(analytic.get(name).unwrap().data()[i], numeric);
            if err > worst.0 {
                worst = (err, name.clone(), i);
            }
        }
    }
    assert!(
        worst.0 < COMPOSITE_TOL,
        "worst rel err {:e} at {}[{}]",
        worst.0,
        worst.1,
        worst.2
    );
}
