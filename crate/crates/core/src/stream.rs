//! Deterministic per-task random streams.
//!
//! Every stochastic component (bootstrap replicates, simulation trials, data
//! generation) draws from a stream keyed by a seed plus a tag path. Streams are
//! pure functions of their keys, so results are identical no matter how work is
//! scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to mix tag words into a seed.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tag words.
pub(crate) fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

/// A ChaCha stream keyed by `(seed, tags)`.
pub(crate) fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Tag words carving out independent stream families.
pub(crate) mod tags {
    pub const PERIOD_B: u64 = 0xB0;
    pub const PERIOD_A: u64 = 0xA0;
    pub const TRIAL: u64 = 0x7121;
    pub const DGP_B: u64 = 0xD6B;
    pub const DGP_A: u64 = 0xD6A;
    pub const BOOT: u64 = 0xB007;
    pub const DIFF_REP: u64 = 0xD1FF;
}
