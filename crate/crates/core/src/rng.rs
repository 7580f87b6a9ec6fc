//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng` keyed
//! by a sub-seed derived from `(master, stream, index)`, never by thread or
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based sub-seed: distinct `(stream, index)` pairs give
/// statistically independent seeds for the same master.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn stream_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Stream tags used by the planners.
pub mod streams {
    pub const UNIFORM: u64 = 0x01;
    pub const GUIDE: u64 = 0x02;
    pub const ORACLE: u64 = 0x03;
    pub const SCENARIO: u64 = 0x04;
    pub const TRIAL: u64 = 0x05;
}
