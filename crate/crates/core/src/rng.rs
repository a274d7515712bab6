//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] seeded
//! either directly by the user or by [`derive_seed`], so results do not depend
//! on thread scheduling.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Builds the generator for a seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a master seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
