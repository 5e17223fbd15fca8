//! Seed derivation. Every stochastic stage gets its own ChaCha stream keyed
//! by a base seed and a path of stream labels, so adding a stage or a repeat
//! never shifts the randomness of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of labels.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn rng_at(base: u64, path: &[u64]) -> Rng {
    rng(derive(base, path))
}

/// Stream labels used across the crate.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const EPOCH: u64 = 4;
    pub const VALIDATION: u64 = 5;
    pub const KNOCKOFF_Z: u64 = 6;
    pub const DRP: u64 = 7;
    pub const FILTER: u64 = 8;
    pub const DIAGNOSTICS: u64 = 9;
    pub const RESPONSE: u64 = 10;
    pub const COEFFICIENTS: u64 = 11;
    pub const REPEAT: u64 = 12;
    pub const ORACLE: u64 = 13;
    pub const DROPOUT: u64 = 14;
    pub const GUMBEL: u64 = 15;
    pub const PROJECTIONS: u64 = 16;
    pub const ORDER: u64 = 17;
}
