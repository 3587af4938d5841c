//! Seed plumbing. Every random stream in the crate is a ChaCha8 generator
//! whose seed is derived from the run seed plus stream identifiers, so results
//! do not depend on call order across unrelated components.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with stream identifiers into a new seed.
pub fn derive(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix(seed), |acc, &s| splitmix(acc ^ splitmix(s)))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, ids: &[u64]) -> Rng {
    seeded(derive(seed, ids))
}
