//! Seeded random streams and deterministic substream derivation.
//!
//! All randomness in the crate flows from explicit `u64` seeds. Concurrent
//! work units (trials, estimator cells) each derive their own seed with
//! [`child_seed`], so results are independent of scheduling.

use rand::SeedableRng;

/// The random stream used everywhere: ChaCha with 8 rounds. Its output is a
/// documented function of the seed, so trajectories are stable across
/// platforms and releases.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a bijection on `u64`.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child stream `index` from a parent seed.
///
/// Counter scheme: `splitmix64(seed + splitmix64(index))`. For a fixed parent
/// seed, distinct indices map to distinct child seeds (both inner and outer
/// maps are bijections), and the scheme nests: trials derive from the master
/// seed, estimator cells derive from the trial seed, and so on.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index)))
}

/// Convenience constructor for a child stream.
pub fn child_rng(seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(child_seed(seed, index))
}
