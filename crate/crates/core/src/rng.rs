//! Seed handling.
//!
//! Every random draw in the crate comes from `ChaCha8Rng` (crate
//! `rand_chacha`), whose output stream is fixed by its seed on every
//! platform. Gaussian samples use `rand_distr::StandardNormal` (ziggurat),
//! scaled by the configured sigma. Component seeds are derived from one
//! global seed by mixing the FNV-1a hash of a component tag and an index
//! through the SplitMix64 finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for component `tag`, instance `index`, under `global`.
pub fn derive_seed(global: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(global ^ fnv1a(tag)).wrapping_add(index))
}
