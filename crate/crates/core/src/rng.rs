//! Deterministic uniform sampling.
//!
//! Every random value in the crate comes from ChaCha8 (`rand_chacha`), seeded
//! with `SeedableRng::seed_from_u64`. Each draw takes one `next_u64`, keeps the
//! top 53 bits and scales them into `[0, 1)`:
//!
//! ```text
//! u = (next_u64() >> 11) as f64 * 2^-53
//! v = lo + (hi - lo) * u
//! ```
//!
//! The value is computed in f64 and then rounded to the target dtype, so the
//! same seed gives identical bytes on every platform for a given dtype.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded uniform stream.
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Next value in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Next value in `[lo, hi)` (or exactly `lo` when `lo == hi`).
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_unit() * n as f64) as usize).min(n - 1)
    }
}

/// Derives an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range() {
        let mut s = UniformStream::new(11);
        for _ in 0..1000 {
            let u = s.next_unit();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<f64> = {
            let mut s = UniformStream::new(5);
            (0..16).map(|_| s.next_in(-1.0, 1.0)).collect()
        };
        let b: Vec<f64> = {
            let mut s = UniformStream::new(5);
            (0..16).map(|_| s.next_in(-1.0, 1.0)).collect()
        };
        assert_eq!(a, b);
        assert_ne!(derive_seed(5, 1), derive_seed(5, 2));
    }
}
