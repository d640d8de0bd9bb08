//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`Stream`], a ChaCha8 generator
//! keyed by a `u64` seed and a stream id. Index sampling only uses `u64`
//! ranges, so the sequence of draws is identical on 32- and 64-bit targets.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the crate, so independent consumers of one seed never
/// share draws.
pub mod streams {
    pub const SUBSAMPLE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const KMEANS: u64 = 5;
}

#[derive(Debug, Clone)]
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.0.gen_range(0..n as u64) as usize
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    /// `k` distinct elements of `pool`, in draw order. Small pools only:
    /// copies `pool`.
    pub fn choose_k<T: Copy>(&mut self, pool: &[T], k: usize) -> Vec<T> {
        debug_assert!(k <= pool.len());
        let mut buf: Vec<T> = pool.to_vec();
        for i in 0..k {
            let j = i + self.index(buf.len() - i);
            buf.swap(i, j);
        }
        buf.truncate(k);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a: Vec<u64> = {
            let mut s = Stream::new(7, 1);
            (0..4).map(|_| s.index(1000) as u64).collect()
        };
        let b: Vec<u64> = {
            let mut s = Stream::new(7, 1);
            (0..4).map(|_| s.index(1000) as u64).collect()
        };
        let c: Vec<u64> = {
            let mut s = Stream::new(7, 2);
            (0..4).map(|_| s.index(1000) as u64).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_indices_distinct() {
        let mut s = Stream::new(3, 0);
        let mut v = s.sample_indices(50, 50);
        v.sort_unstable();
        assert_eq!(v, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn unit_in_range() {
        let mut s = Stream::new(1, 0);
        for _ in 0..1000 {
            let u = s.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
