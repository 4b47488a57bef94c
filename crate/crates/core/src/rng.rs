//! Seed plumbing. Every random draw in the crate comes from a `ChaCha8Rng`
//! whose seed is derived from a master seed through [`derive_seed`], so any
//! stream can be rebuilt from `(master, stage, purpose, index)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod purpose {
    pub const INIT: u64 = 0x01;
    pub const DATA_A: u64 = 0x02;
    pub const DATA_B: u64 = 0x03;
    pub const REPLAY: u64 = 0x04;
    pub const PAIRS: u64 = 0x05;
    pub const SCENES: u64 = 0x10;
    pub const RAIN: u64 = 0x11;
}

/// Stage indices used by [`derive_seed`].
pub mod stage {
    pub const TRANSLATOR: u64 = 1;
    pub const DSN: u64 = 2;
    pub const SRN: u64 = 3;
    pub const DATA: u64 = 4;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splitting rule: `mix64(master ^ mix64((stage << 32) ^ purpose))`.
pub fn derive_seed(master: u64, stage: u64, purpose: u64) -> u64 {
    mix64(master ^ mix64((stage << 32) ^ purpose))
}

/// Seed for the `index`-th draw of a stream rooted at `seed`.
pub fn indexed_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0xA5A5_A5A5)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
