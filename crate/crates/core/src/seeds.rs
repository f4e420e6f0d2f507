//! Named random sub-streams derived from a single master seed.
//!
//! Each stream is keyed by `(master_seed, name, index)` through a fixed
//! hash, so introducing a new stream name never shifts the draws of
//! existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const PLACEMENT: &str = "placement";
pub const CPU: &str = "cpu";
pub const DATA: &str = "data";
pub const PARTITION: &str = "partition";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit seed for the named stream.
pub fn derive_seed(master_seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed ^ fnv1a(name.as_bytes())) ^ splitmix64(index))
}

pub fn stream(master_seed: u64, name: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master_seed, name, index))
}
