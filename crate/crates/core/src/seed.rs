//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is keyed by the master seed plus a
//! path of counters (repetition index, role tag, shadow index, ...). Each
//! path component is folded in with one SplitMix64 finalizer round:
//!
//! ```text
//! state_0     = splitmix64(master)
//! state_{k+1} = splitmix64(state_k ^ splitmix64(component_k + GOLDEN))
//! ```
//!
//! so the seed of a stream depends only on its path, never on the order in
//! which streams are created. That makes concurrent and sequential execution
//! produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate. ChaCha8 output is stable across
/// platforms and `rand` releases.
pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Role tags used as the second path component of derived seeds.
pub mod role {
    pub const SPLIT: u64 = 1;
    pub const CHALLENGE: u64 = 2;
    pub const TARGET: u64 = 3;
    pub const SHADOW: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const SEARCH: u64 = 6;
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a counter path.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |state, &component| {
        splitmix64(state ^ splitmix64(component.wrapping_add(GOLDEN)))
    })
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
