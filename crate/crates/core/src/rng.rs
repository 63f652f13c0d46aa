//! Seeded random number helpers.
//!
//! All randomness in the crate flows through a `ChaCha8Rng` so that every
//! draw is reproducible from a 64-bit seed across platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math;

/// Deterministic stream cipher RNG seeded from a 64-bit integer.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in [0, 1) with 53 bits of precision.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in 0..=max.
pub fn uniform_usize(rng: &mut ChaCha8Rng, max: usize) -> usize {
    // max is tiny here (patch offsets, case indices); modulo bias of a
    // 64-bit draw is negligible
    (rng.next_u64() % (max as u64 + 1)) as usize
}

/// Standard normal draw via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let mut u1 = uniform(rng);
    while u1 == 0.0 {
        u1 = uniform(rng);
    }
    let u2 = uniform(rng);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Two independent standard normal draws (both Box-Muller branches).
pub fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut u1 = uniform(rng);
    while u1 == 0.0 {
        u1 = uniform(rng);
    }
    let u2 = uniform(rng);
    let r = math::sqrt(-2.0 * math::ln(u1));
    let t = 2.0 * core::f64::consts::PI * u2;
    (r * math::cos(t), r * math::sin(t))
}
