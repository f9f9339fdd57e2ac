//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream identified by
//! a `(seed, stream)` pair: the 64-bit seed is expanded into the ChaCha key
//! with `seed_from_u64`, and `stream` selects one of 2^64 independent
//! counter-based streams under that key. Parallel sweeps derive per-task
//! streams with [`derive_seed`] so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SnotRng = ChaCha8Rng;

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SnotRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a parent seed with a task label (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifiers used across the crate.
pub mod streams {
    pub const SAMPLE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const INIT_POTENTIAL: u64 = 3;
    pub const INIT_MAP: u64 = 4;
    pub const TRAIN_SOURCE: u64 = 5;
    pub const TRAIN_TARGET: u64 = 6;
    pub const TRAIN_NOISE: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const MONTE_CARLO: u64 = 9;
}
