//! Deterministic seed derivation. Every random stream in the crate is a
//! `ChaCha8Rng` keyed by a seed derived from a root seed plus a path of labels,
//! so independent components never share a stream and results do not depend
//! on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a string label.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h = splitmix(seed);
    for b in label.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    h
}

/// Derives a child seed from `seed` and an integer index.
pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ index.wrapping_mul(0xA24B_AED4_963E_E407))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    rng(derive(seed, label))
}
