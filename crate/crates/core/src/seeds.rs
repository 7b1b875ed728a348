//! Deterministic derivation of purpose-specific RNG seeds.
//!
//! Every random decision in a run (parameter init, sampling, dropout masks,
//! synthesis, t-SNE init) draws from its own stream derived from the run seed
//! and a purpose tag, so adding randomness in one place never perturbs
//! another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mixes a base seed with a purpose tag into an independent stream seed.
pub fn derive(base: u64, tag: &str) -> u64 {
    splitmix64(fnv1a(tag.as_bytes()) ^ base)
}

/// Like [`derive`], additionally keyed by an index (step, record, ...).
pub fn derive_indexed(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive(base, tag) ^ splitmix64(index))
}

/// The project-wide RNG: portable, seedable, reproducible.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
