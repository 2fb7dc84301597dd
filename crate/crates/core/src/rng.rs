//! Seed derivation for reproducible, order-independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for the stream named by `parts` under `seed`.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = mix64(seed);
    for &p in parts {
        h = mix64(h ^ p);
    }
    ChaCha8Rng::seed_from_u64(h)
}
