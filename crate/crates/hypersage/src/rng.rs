//! Deterministic seed derivation.
//!
//! Every stochastic component (weight init, dropout masks, neighborhood
//! sampling, split shuffles) draws from its own ChaCha stream derived from a
//! master seed plus a fixed tag, so runs are reproducible and independent
//! streams never share state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; mixes one word into a seed.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds the given words into `seed`, one SplitMix round per word.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &p in parts {
        s = splitmix64(s ^ p);
    }
    s
}

/// ChaCha generator for the derived stream. ChaCha output is stable across
/// platforms and crate versions, unlike `StdRng`.
pub fn seeded_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Plain generator for tests.
pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, one per stochastic component.
pub mod stream {
    pub const WEIGHT_INIT: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const NEIGHBOR_SAMPLING: u64 = 3;
    pub const SPLIT: u64 = 4;
}
