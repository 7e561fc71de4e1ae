//! Deterministic RNG substreams.
//!
//! Every random draw in the crate comes from a substream keyed by a master
//! seed plus a path of integers (tree index, sample index, lane tags, ...).
//! Substreams are independent of each other and of evaluation order, which
//! keeps tree training reproducible under any thread schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche, cheap.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse `(seed, path...)` to a single 64-bit subseed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = mix64(seed ^ 0x6a09_e667_f3bc_c909);
    for &part in path {
        state = mix64(state ^ mix64(part));
    }
    state
}

/// RNG for the substream addressed by `(seed, path...)`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
