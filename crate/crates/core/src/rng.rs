//! Seed derivation and the one RNG used across the crate.
//!
//! All randomness flows through [`ChaCha8Rng`], whose output stream is
//! specified independently of platform and word size. Sub-seeds for an
//! utterance, an epoch or an iteration are derived with the SplitMix64
//! finalizer so that streams are decorrelated but reproducible.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base`, a stream tag and an index.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let a = mix(base.wrapping_add(GOLDEN));
    let b = mix(a ^ tag.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
    mix(b ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, so that unrelated consumers of the same base seed never share a stream.
pub mod tag {
    pub const SYNTH_LEXICON: u64 = 1;
    pub const SYNTH_UTTERANCE: u64 = 2;
    pub const CORRUPT: u64 = 3;
    pub const INIT_RANDOM: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const EPOCH_ORDER: u64 = 6;
    pub const AUGMENT: u64 = 7;
    pub const NOISE: u64 = 8;
    pub const ITERATION: u64 = 9;
    pub const DEV_SPLIT: u64 = 10;
}
