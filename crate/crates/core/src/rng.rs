//! Seeded randomness shared by sampling, HNSW level assignment and training.
//!
//! The generator is PCG-XSL-RR-128/64 (`Pcg64` from `rand_pcg`), a published
//! algorithm with value-stable output. Every consumer derives its own stream
//! from `(seed, context labels)`: the 64-bit seed becomes the initial LCG
//! state and the FNV-1a hash of the NUL-joined context labels selects the
//! stream increment. Bounded integers use rejection sampling on `next_u64`
//! and shuffles are plain Fisher-Yates, so a sample can be reproduced by any
//! implementation of the same three pieces.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand_core::Rng;
use rand_pcg::Pcg64;

/// FNV-1a over the byte strings, each followed by a NUL separator.
pub fn stream_hash(parts: &[&str]) -> u64 {
    let mut h = FnvHasher::default();
    for part in parts {
        h.write(part.as_bytes());
        h.write(&[0]);
    }
    h.finish()
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Pcg64,
}

impl SeededRng {
    pub fn new(seed: u64, context: &[&str]) -> Self {
        let stream = stream_hash(context);
        Self {
            inner: Pcg64::new(u128::from(seed), u128::from(stream)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound`. Panics if `bound == 0`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        // Largest multiple of `bound` that fits; values at or above it are rejected.
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % bound;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below((n - i) as u64) as usize;
            items.swap(i, j);
        }
    }

    /// Draws `count` distinct positions from `0..n` without replacement
    /// (partial Fisher-Yates) and returns them in draw order.
    pub fn choose_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        let count = count.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = SeededRng::new(7, &["class", "en-US"]);
        let mut b = SeededRng::new(7, &["class", "en-US"]);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn context_changes_stream() {
        let mut a = SeededRng::new(7, &["a", "b"]);
        let mut b = SeededRng::new(7, &["ab"]);
        let xs: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn below_stays_in_range_and_covers() {
        let mut rng = SeededRng::new(1, &[]);
        let mut seen = [false; 5];
        for _ in 0..500 {
            let v = rng.below(5) as usize;
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(rng.below(1), 0);
    }

    #[test]
    fn choose_indices_distinct() {
        let mut rng = SeededRng::new(3, &["x"]);
        let mut picked = rng.choose_indices(40, 31);
        assert_eq!(picked.len(), 31);
        picked.sort_unstable();
        picked.dedup();
        assert_eq!(picked.len(), 31);
        assert!(picked.iter().all(|&i| i < 40));
    }

    #[test]
    fn unit_in_range() {
        let mut rng = SeededRng::new(9, &[]);
        for _ in 0..1000 {
            let u = rng.unit_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
