//! Seed derivation. Every stochastic component takes an explicit seed and
//! derives child seeds from `(seed, stream, index)` so work can be split
//! across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_tag(stream: &str) -> u64 {
    // FNV-1a
    stream
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    mix(mix(seed ^ stream_tag(stream)).wrapping_add(index))
}

pub fn rng_for(seed: u64, stream: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
