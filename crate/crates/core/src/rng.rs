//! Deterministic random streams.
//!
//! Every consumer of randomness owns a ChaCha8 stream addressed by a
//! `(seed, index)` pair. ChaCha exposes 2^64 independent streams per key, so
//! trajectories, rejection blocks and line-search directions can be split off
//! a master seed without coordination and merged by index afterwards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream number `index` under key `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent key for a named purpose (`tag`) under `seed`.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
