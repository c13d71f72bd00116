//! Seed derivation: every independent unit of work owns a generator whose
//! seed is a fixed function of the parent seed and a stream label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `seed` and the stream indices.
pub fn derive(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix(seed), |acc, &s| splitmix(acc ^ splitmix(s.wrapping_add(0x5851_F42D))))
}

pub fn rng(seed: u64, stream: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}
