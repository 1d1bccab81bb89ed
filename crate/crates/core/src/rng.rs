//! Scenario randomness.
//!
//! SplitMix64 (Steele, Lea & Flood): state advances by `0x9E3779B97F4A7C15`,
//! output mixes with `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`. A
//! uniform `f64` in `[0, 1)` is `(next_u64() >> 11) * 2^-53`. The same seed
//! therefore reproduces the same scenario bit-for-bit in any language.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct ScenarioRng(SplitMix64);

impl ScenarioRng {
    pub fn new(seed: u64) -> Self {
        // from_seed takes the raw state, no extra scrambling
        Self(SplitMix64::from_seed(seed.to_le_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
