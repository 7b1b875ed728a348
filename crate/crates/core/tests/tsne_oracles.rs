//! t-SNE verification: entropy recomputation, finite-difference checking of
//! the KL gradient, and a two-blob separation benchmark scored by
//! silhouette.

use auscult::embed::{
    calibrate_perplexity, pairwise_sq_distances, tsne_run, tsne_step, TsneConfig, TsneState,
};
use auscult::seeds;
use auscult::Value;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn random_points(n: usize, d: usize, seed: u64) -> Value {
    let mut rng = seeds::rng(seed);
    Value::matrix(n, d, (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect())
}

#[test]
fn calibration_entropy_matches_target_for_every_row() {
    let n = 50;
    let points = random_points(n, 8, 71);
    let distances = pairwise_sq_distances(&points);
    let perplexity = 12.0;
    let affinities = calibrate_perplexity(&distances, n, perplexity).unwrap();

    // independent recomputation of each conditional row's Shannon entropy
    let target = perplexity.log2();
    for i in 0..n {
        let row = &affinities.conditional[i * n..(i + 1) * n];
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
        let entropy: f64 = row
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum();
        assert!(
            (entropy - target).abs() <= 1e-5,
            "row {i}: entropy {entropy} vs target {target}"
        );
    }

    let joint_sum: f64 = affinities.joint.iter().sum();
    assert!((joint_sum - 1.0).abs() < 1e-12);
}

/// KL(P || Q(Y)) recomputed from scratch, the oracle for the step gradient.
fn kl_of(p: &[f64], y: &[f64], n: usize) -> f64 {
    let mut kernel = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            kernel[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
            total += kernel[i * n + j];
        }
    }
    let mut kl = 0.0;
    for i in 0..n * n {
        if p[i] > 0.0 {
            kl += p[i] * (p[i] / (kernel[i] / total)).ln();
        }
    }
    kl
}

#[test]
fn step_gradient_matches_finite_differences_of_kl() {
    let n = 5;
    let points = random_points(n, 4, 72);
    let distances = pairwise_sq_distances(&points);
    let p = calibrate_perplexity(&distances, n, 1.3).unwrap().joint;

    // spread-out coordinates so distances are O(1)
    let mut rng = seeds::rng(73);
    let y: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();

    // recover the gradient from a unit-lr, zero-momentum, no-exaggeration step
    let config = TsneConfig {
        learning_rate: 1.0,
        momentum_early: 0.0,
        momentum_late: 0.0,
        exaggeration: 1.0,
        exaggeration_until: 0,
        ..TsneConfig::default()
    };
    let mut state = TsneState::new(y.clone());
    tsne_step(&p, &mut state, &config, 0);
    let grad: Vec<f64> = y
        .iter()
        .zip(&state.coords)
        .map(|(before, after)| before - after)
        .collect();

    let h = 1e-6;
    for k in 0..n * 2 {
        let mut up = y.clone();
        up[k] += h;
        let mut down = y.clone();
        down[k] -= h;
        let numeric = (kl_of(&p, &up, n) - kl_of(&p, &down, n)) / (2.0 * h);
        let denom = f64::max(1.0, f64::max(grad[k].abs(), numeric.abs()));
        assert!(
            ((grad[k] - numeric) / denom).abs() < 1e-5,
            "coord {k}: {} vs {numeric}",
            grad[k]
        );
    }
}

/// Mean silhouette coefficient over 2-D points with binary labels.
fn silhouette(coords: &[(f64, f64)], labels: &[usize]) -> f64 {
    let n = coords.len();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mut same = (0.0, 0u32);
        let mut other = (0.0, 0u32);
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dist(coords[i], coords[j]);
            if labels[i] == labels[j] {
                same = (same.0 + d, same.1 + 1);
            } else {
                other = (other.0 + d, other.1 + 1);
            }
        }
        let a = same.0 / same.1 as f64;
        let b = other.0 / other.1 as f64;
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn two_blob_benchmark_separates_cleanly() {
    // two 25-point unit-sigma Gaussian blobs, centers 20 sigma apart in 16-D
    let n = 50;
    let d = 16;
    let mut rng = seeds::rng(74);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let blob = i / 25;
        labels.push(blob);
        let offset = if blob == 0 { 0.0 } else { 20.0 };
        for k in 0..d {
            let center = if k == 0 { offset } else { 0.0 };
            data.push(center + normal.sample(&mut rng));
        }
    }
    let points = Value::matrix(n, d, data);

    // learning rate n / (4 * exaggeration) floored at 50, the usual
    // small-sample setting; the default 200 needs ~4x more iterations here
    let config = TsneConfig {
        perplexity: 10.0,
        iterations: 1000,
        learning_rate: 50.0,
        seed: 7,
        ..TsneConfig::default()
    };
    let result = tsne_run(&points, &config).unwrap();

    let s = silhouette(&result.coords, &labels);
    assert!(s > 0.8, "silhouette {s:.4}");

    // the optimizer made progress
    let first = result.kl_trace[0];
    let last = *result.kl_trace.last().unwrap();
    assert!(last < first, "KL went {first} -> {last}");
}

#[test]
fn kl_trace_is_mostly_non_increasing_after_exaggeration() {
    let n = 50;
    let d = 16;
    let mut rng = seeds::rng(75);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let offset = if i < 25 { 0.0 } else { 20.0 };
        for k in 0..d {
            data.push(if k == 0 { offset } else { 0.0 } + normal.sample(&mut rng));
        }
    }
    let points = Value::matrix(n, d, data);
    let config = TsneConfig {
        perplexity: 10.0,
        iterations: 900,
        seed: 11,
        ..TsneConfig::default()
    };
    let result = tsne_run(&points, &config).unwrap();

    let post: Vec<f64> = result.kl_trace[260..].to_vec();
    let decreasing = post
        .windows(2)
        .filter(|w| w[1] <= w[0] + 1e-12)
        .count();
    let fraction = decreasing as f64 / (post.len() - 1) as f64;
    assert!(fraction >= 0.95, "non-increasing fraction {fraction:.3}");

    // final KL below the first post-exaggeration value too
    assert!(post.last().unwrap() < &post[0]);
}

#[test]
fn final_kl_is_below_initial_on_random_data() {
    let points = random_points(40, 10, 76);
    let config = TsneConfig {
        perplexity: 8.0,
        iterations: 1000,
        learning_rate: 50.0,
        seed: 3,
        ..TsneConfig::default()
    };
    let result = tsne_run(&points, &config).unwrap();
    assert!(result.kl_trace.last().unwrap() < &result.kl_trace[0]);
}
