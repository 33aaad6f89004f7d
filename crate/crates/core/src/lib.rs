//! Intermittent solenoid attractors, their induced Markov schemes, and
//! finite Young-tower models for mixing rates, coupling and statistics.

pub mod circle_map;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod induced_scheme;
pub mod solenoid;
pub mod stats;
pub mod tower;

pub use error::{Error, Result};

/// Seed of the `k`-th independent stream derived from `seed` (splitmix64).
/// Work split across threads draws from these, so results do not depend on
/// scheduling.
pub fn stream_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
