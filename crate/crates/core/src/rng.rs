//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream keyed by an explicit seed plus a tuple of stream indices, so draws
//! do not depend on iteration or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, indices: &[u64]) -> ChaCha8Rng {
    let mut key = splitmix64(seed);
    for &i in indices {
        key = splitmix64(key ^ splitmix64(i.wrapping_add(1)));
    }
    ChaCha8Rng::seed_from_u64(key)
}

/// Stream tags, so unrelated consumers of one seed never share draws.
pub(crate) mod tag {
    pub const SPLIT: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const SAMPLE_RANDOM: u64 = 5;
    pub const KMEANS: u64 = 6;
    pub const RANDOM_SCORES: u64 = 7;
}
