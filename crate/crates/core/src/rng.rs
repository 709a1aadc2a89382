//! Counter-style seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers
//! (run seed, generation, slot, ...) so results never depend on the order in
//! which parallel work completes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key tuple into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x6A09_E667_F3BC_C908u64;
    for &p in parts {
        acc = splitmix(acc ^ splitmix(p));
    }
    acc
}

/// Random stream for a key tuple.
pub fn stream(parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
