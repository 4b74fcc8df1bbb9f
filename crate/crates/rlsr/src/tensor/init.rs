//! Weight initialization.

use crate::scalar::Scalar;
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha20Rng;

/// Kaiming-uniform samples in [-b, b] with b = sqrt(6 / fan_in).
pub fn kaiming_uniform<S: Scalar>(rng: &mut ChaCha20Rng, fan_in: usize, count: usize) -> Vec<S> {
    assert!(fan_in > 0, "fan_in must be positive");
    let bound = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..count).map(|_| S::from_f64(dist.sample(rng))).collect()
}
