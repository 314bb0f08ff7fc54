//! Deterministic random streams.
//!
//! Every random draw in the crate goes through [`Stream`], a thin wrapper over
//! xoshiro256++ (state seeded from a `u64` with SplitMix64, increment
//! `0x9e3779b97f4a7c15`, mixers `0xbf58476d1ce4e5b9` / `0x94d049bb133111eb`).
//! Uniform floats take the top 53 bits of a draw; bounded integers use the
//! 128-bit multiply-shift map. Both are fixed here rather than delegated to a
//! distribution library so that regression values stay stable across versions
//! and can be reproduced in other languages.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct Stream {
    inner: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// The `index`-th disjoint substream of `seed`: the base state advanced by
    /// `index` jumps of 2^128 draws each.
    pub fn substream(seed: u64, index: u32) -> Self {
        let mut inner = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..index {
            inner.jump();
        }
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Index drawn from the categorical distribution with the given weights
    /// (assumed to sum to one). Falls back to the last index on round-off.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
