//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 streams. Independent streams are
//! keyed by mixing a base seed with stable identifiers, so results do not
//! depend on the order in which parallel work runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng64 = ChaCha8Rng;

/// FNV-1a over bytes; stable across platforms and toolchains.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix(base), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn rng_for(base: u64, keys: &[u64]) -> Rng64 {
    ChaCha8Rng::seed_from_u64(derive_seed(base, keys))
}
