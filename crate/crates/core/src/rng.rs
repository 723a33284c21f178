//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers
//! (base seed, scenario hash, replication, method, permutation index, ...).
//! The key is folded through SplitMix64 into a 64-bit seed for a ChaCha8
//! generator, so a stream depends only on its key and never on which worker
//! thread happens to draw from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in run manifests.
pub const GENERATOR_NAME: &str = "ChaCha8 keyed by SplitMix64(base_seed, scenario, replication, ...)";

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a key path into a single seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Stable 64-bit FNV-1a hash for string labels such as scenario ids.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream(base: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
