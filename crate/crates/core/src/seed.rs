//! Deterministic seed derivation so parallel work stays reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere a seeded random source is needed.
pub type SeededRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `label` under `parent`. FNV-1a of the label is mixed with
/// the parent through splitmix64, independent of scheduling order.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(parent ^ splitmix64(h))
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parent: u64, label: &str) -> SeededRng {
    rng_from_seed(derive_seed(parent, label))
}
