//! Class-balancing weighted sampler.

use rand::Rng;

use super::{CycleRecord, DataError, Label, Result};

/// Per-record sampling probabilities: positive, summing to one, equal
/// within each class.
#[derive(Debug, Clone)]
pub struct SamplerWeights {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplerWeights {
    fn from_probs(mut probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { probs, cumulative }
    }

    /// Equal probability for every record.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "cannot sample from an empty set");
        Self::from_probs(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

/// Inverse-frequency weights over training records: each class's expected
/// draw probability becomes uniform (1/4 per class).
pub fn make_weights(records: &[CycleRecord]) -> Result<SamplerWeights> {
    let mut counts = [0usize; 4];
    for record in records {
        counts[record.label.index()] += 1;
    }
    for label in Label::ALL {
        if counts[label.index()] == 0 {
            return Err(DataError::MissingClass {
                class: label.name(),
            });
        }
    }
    let probs = records
        .iter()
        .map(|r| 1.0 / (4.0 * counts[r.label.index()] as f64))
        .collect();
    Ok(SamplerWeights::from_probs(probs))
}

/// Draws `count` record indices i.i.d. with replacement.
pub fn weighted_sample(weights: &SamplerWeights, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(!weights.is_empty(), "cannot sample from an empty set");
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            weights.cumulative.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}
