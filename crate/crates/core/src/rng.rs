//! Reproducible random streams.
//!
//! A master seed fixes a ChaCha8 key; each replica gets its own stream id,
//! built from an ensemble namespace and the replica index. The mapping does
//! not depend on thread scheduling, so parallel runs are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream `index` inside ensemble `namespace`.
pub fn stream(seed: u64, namespace: u32, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((namespace as u64) << 40) ^ index);
    rng
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Exponential holding time with the given rate.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // 1 - u lies in (0, 1], so the log is finite.
    -(1.0 - uniform(rng)).ln() / rate
}
