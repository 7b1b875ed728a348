//! Exact t-SNE over clip embeddings.
//!
//! The O(n²) reference algorithm: per-row Gaussian bandwidths found by
//! binary search against a target perplexity, symmetrized affinities,
//! Student-t low-dimensional kernel, and momentum gradient descent on the
//! KL divergence with early exaggeration. Small test sets make exactness
//! affordable and keep the gradient checkable against finite differences.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Value;
use crate::seeds;

#[derive(Debug, Error)]
pub enum TsneError {
    #[error("perplexity calibration failed to converge for row {row} after {iterations} iterations")]
    Calibration { row: usize, iterations: usize },
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid t-SNE config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TsneError>;

/// t-SNE hyperparameters; defaults are the standard settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Momentum before and after `momentum_switch`.
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_switch: usize,
    /// Affinities are multiplied by this factor for the first
    /// `exaggeration_until` iterations.
    pub exaggeration: f64,
    pub exaggeration_until: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch: 250,
            exaggeration: 12.0,
            exaggeration_until: 250,
            seed: 0,
        }
    }
}

const ENTROPY_TOLERANCE_BITS: f64 = 1e-5;
const CALIBRATION_MAX_ITERS: usize = 200;

/// Squared Euclidean distances between rows of an `[n, d]` value.
pub fn pairwise_sq_distances(points: &Value) -> Vec<f64> {
    let n = points.rows();
    let d = points.cols();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = points.data()[i * d + k] - points.data()[j * d + k];
                acc += diff * diff;
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
    out
}

/// Row-conditional and symmetrized joint affinities.
#[derive(Debug, Clone)]
pub struct Affinities {
    /// `P(j|i)`: each row sums to 1 with Shannon entropy `log2(perplexity)`.
    pub conditional: Vec<f64>,
    /// `P = (P(j|i) + P(i|j)) / 2n`: sums to 1 over all pairs.
    pub joint: Vec<f64>,
}

/// Calibrates per-row Gaussian bandwidths by binary search so each
/// conditional row has Shannon entropy `log2(perplexity)`, then symmetrizes.
pub fn calibrate_perplexity(distances: &[f64], n: usize, perplexity: f64) -> Result<Affinities> {
    assert_eq!(distances.len(), n * n, "distance matrix must be n x n");
    let target_bits = perplexity.log2();
    let mut conditional = vec![0.0; n * n];

    for i in 0..n {
        let mut beta = 1.0; // 1 / (2 sigma^2)
        let mut beta_lo = f64::NEG_INFINITY;
        let mut beta_hi = f64::INFINITY;
        let mut converged = false;

        for _ in 0..CALIBRATION_MAX_ITERS {
            let row = &mut conditional[i * n..(i + 1) * n];
            let entropy = conditional_row(&distances[i * n..(i + 1) * n], i, beta, row);
            let diff = entropy - target_bits;
            if diff.abs() < ENTROPY_TOLERANCE_BITS {
                converged = true;
                break;
            }
            if diff > 0.0 {
                // entropy too high: tighten the kernel
                beta_lo = beta;
                beta = if beta_hi.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_hi) / 2.0
                };
            } else {
                beta_hi = beta;
                beta = if beta_lo.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_lo) / 2.0
                };
            }
        }
        if !converged {
            return Err(TsneError::Calibration {
                row: i,
                iterations: CALIBRATION_MAX_ITERS,
            });
        }
    }

    let mut joint = vec![0.0; n * n];
    let norm = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / norm;
        }
    }
    Ok(Affinities { conditional, joint })
}

/// Fills one conditional row for bandwidth `beta`; returns its Shannon
/// entropy in bits. Distances are shifted by the row minimum before
/// exponentiating so the dominant term never underflows, which keeps the
/// bisection smooth even at very large `beta` (near-tied neighbors).
fn conditional_row(sq_dist: &[f64], diag: usize, beta: f64, row: &mut [f64]) -> f64 {
    let d_min = sq_dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != diag)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, &d) in sq_dist.iter().enumerate() {
        let p = if j == diag {
            0.0
        } else {
            (-beta * (d - d_min)).exp()
        };
        row[j] = p;
        sum += p;
    }
    let mut entropy = 0.0;
    if sum > 0.0 {
        for p in row.iter_mut() {
            *p /= sum;
            if *p > 0.0 {
                entropy -= *p * p.log2();
            }
        }
    }
    entropy
}

/// Student-t affinities for 2-D coordinates; diagonal excluded, normalized
/// over all off-diagonal pairs. Also returns the unnormalized kernels.
fn student_t_q(y: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut kernel = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
            sum += 2.0 * k;
        }
    }
    let q = kernel.iter().map(|&k| k / sum).collect();
    (q, kernel)
}

/// KL(P || Q) over off-diagonal pairs; zero-probability pairs contribute 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv / qv.max(1e-300)).ln())
        .sum()
}

/// Mutable optimizer state: coordinates and momentum buffer.
#[derive(Debug, Clone)]
pub struct TsneState {
    pub n: usize,
    /// Row-major `[n, 2]` coordinates.
    pub coords: Vec<f64>,
    velocity: Vec<f64>,
}

impl TsneState {
    pub fn new(coords: Vec<f64>) -> Self {
        let n = coords.len() / 2;
        Self {
            n,
            coords,
            velocity: vec![0.0; n * 2],
        }
    }

    /// Seeded Gaussian initialization with sigma 1e-4.
    pub fn init(n: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seeds::derive(seed, "tsne-init"));
        let normal = Normal::new(0.0, 1e-4).expect("valid sigma");
        Self::new((0..n * 2).map(|_| normal.sample(&mut rng)).collect())
    }
}

/// The KL gradient at the current coordinates for affinities `p`
/// (already exaggerated if desired): `4 * sum_j (p-q)(1+d^2)^-1 (y_i-y_j)`.
fn kl_gradient(p: &[f64], q: &[f64], kernel: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let mut grad = vec![0.0; n * 2];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let factor = 4.0 * (p[i * n + j] - q[i * n + j]) * kernel[i * n + j];
            grad[2 * i] += factor * (y[2 * i] - y[2 * j]);
            grad[2 * i + 1] += factor * (y[2 * i + 1] - y[2 * j + 1]);
        }
    }
    grad
}

/// One momentum step on the KL objective.
///
/// `p` is the *un-exaggerated* affinity matrix; early exaggeration is
/// applied internally while `iteration < exaggeration_until`. The returned
/// value is the KL divergence of the true objective at the pre-step
/// coordinates.
pub fn tsne_step(p: &[f64], state: &mut TsneState, config: &TsneConfig, iteration: usize) -> f64 {
    let n = state.n;
    let (q, kernel) = student_t_q(&state.coords, n);
    let kl = kl_divergence(p, &q);

    let grad = if iteration < config.exaggeration_until && config.exaggeration != 1.0 {
        let boosted: Vec<f64> = p.iter().map(|&v| v * config.exaggeration).collect();
        kl_gradient(&boosted, &q, &kernel, &state.coords, n)
    } else {
        kl_gradient(p, &q, &kernel, &state.coords, n)
    };

    let momentum = if iteration < config.momentum_switch {
        config.momentum_early
    } else {
        config.momentum_late
    };
    for (i, g) in grad.iter().enumerate() {
        state.velocity[i] = momentum * state.velocity[i] - config.learning_rate * g;
        state.coords[i] += state.velocity[i];
    }
    kl
}

/// Result of a full run: final coordinates plus the per-iteration KL trace.
#[derive(Debug, Clone)]
pub struct TsneResult {
    /// `(x, y)` per input row.
    pub coords: Vec<(f64, f64)>,
    pub kl_trace: Vec<f64>,
}

/// Runs t-SNE on `[n, d]` embeddings.
pub fn tsne_run(embeddings: &Value, config: &TsneConfig) -> Result<TsneResult> {
    let n = embeddings.rows();
    if n < 4 {
        return Err(TsneError::TooFewPoints(n));
    }
    if config.perplexity >= (n - 1) as f64 / 3.0 {
        return Err(TsneError::Config(format!(
            "perplexity {} too large for {} points (needs < (n-1)/3)",
            config.perplexity, n
        )));
    }
    if config.perplexity <= 1.0 {
        return Err(TsneError::Config("perplexity must exceed 1".into()));
    }
    if config.iterations == 0 {
        return Err(TsneError::Config("iterations must be positive".into()));
    }

    let distances = pairwise_sq_distances(embeddings);
    let p = calibrate_perplexity(&distances, n, config.perplexity)?.joint;

    let mut state = TsneState::init(n, config.seed);
    let mut kl_trace = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        kl_trace.push(tsne_step(&p, &mut state, config, iteration));
    }

    let coords = (0..n)
        .map(|i| (state.coords[2 * i], state.coords[2 * i + 1]))
        .collect();
    Ok(TsneResult { coords, kl_trace })
}
