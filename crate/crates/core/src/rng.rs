//! Seed derivation. Every stochastic component draws from a ChaCha stream
//! keyed by a base seed and a purpose tag so runs are reproducible and
//! components never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser; good avalanche for combining small integers.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, parts))
}

pub mod tag {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const PRETRAIN: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const INTER: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const SELF_TRAIN: u64 = 8;
}
