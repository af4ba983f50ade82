//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by SHA-256 over
//! `"trimodal-rng" || 0x00 || seed (u64 little-endian) || label (UTF-8)`.
//! ChaCha output is specified bit-for-bit, so a given `(seed, label)` pair
//! produces the same stream on every platform. Integer draws go through
//! `u64` ranges so results do not depend on the width of `usize`.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Derives the substream for `(seed, label)`. Distinct labels give independent streams.
pub fn rng_stream(seed: u64, label: &str) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"trimodal-rng\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Rng {
        seed,
        inner: ChaCha8Rng::from_seed(key),
    }
}

impl Rng {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below called with n = 0");
        self.inner.random_range(0..n as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(mut rng: Rng, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_seed_and_label_repeat() {
        assert_eq!(
            draws(rng_stream(42, "sampling"), 100),
            draws(rng_stream(42, "sampling"), 100)
        );
    }

    #[test]
    fn labels_and_seeds_separate_streams() {
        let a = draws(rng_stream(42, "sampling"), 4);
        let b = draws(rng_stream(42, "init"), 4);
        let c = draws(rng_stream(43, "sampling"), 4);
        assert_ne!(a[0], b[0]);
        assert_ne!(a[0], c[0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stream_is_pinned() {
        // Frozen so an accidental change of algorithm or key derivation is caught.
        let mut rng = rng_stream(42, "sampling");
        let first = rng.next_u64();
        let again = rng_stream(42, "sampling").next_u64();
        assert_eq!(first, again);
        assert_eq!(first, FROZEN_FIRST_DRAW);
    }

    const FROZEN_FIRST_DRAW: u64 = 1_696_354_604_982_522_247;

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = rng_stream(7, "shuffle");
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = rng_stream(1, "u");
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
