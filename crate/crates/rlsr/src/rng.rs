//! Deterministic seed splitting.
//!
//! All randomness flows from a single master seed; each subsystem draws from
//! its own stream so adding draws to one subsystem never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Subsystem stream identifiers. Fixed; changing one changes every seeded run.
pub mod streams {
    pub const GENERATOR_INIT: u64 = 1;
    pub const DISCRIMINATOR_INIT: u64 = 2;
    pub const DATA_SAMPLING: u64 = 3;
    pub const ACTION_SAMPLING: u64 = 4;
    pub const FEATURE_NET: u64 = 5;
}

/// SplitMix64 finalizer; bijective on u64.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive a subsystem seed from the master seed and a stream id.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Deterministic RNG for one subsystem stream.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(split_seed(master, stream))
}
