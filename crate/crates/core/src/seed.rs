//! Stable seed derivation. Values must not change between releases, so this
//! avoids `std::hash` (whose output is unspecified across Rust versions).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Combines integers into a single well-mixed seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

/// 64-bit FNV-1a over the UTF-8 bytes of `text`.
pub fn hash_str(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
