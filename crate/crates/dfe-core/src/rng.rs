//! Seed derivation for reproducible, order-independent randomness.
//!
//! Every random decision in a run draws from a ChaCha stream addressed by
//! `(master_seed, stream_id)`. Streams are independent, so rounds can be
//! evaluated in any order (or in parallel) and still produce bit-identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id of the importance sampler that draws the per-round indices.
pub const STREAM_SAMPLER: u64 = 0;
/// Round `i` uses stream `STREAM_ROUND_BASE + i`.
pub const STREAM_ROUND_BASE: u64 = 1;
/// Group `k`'s eigenbasis construction uses stream `STREAM_BASIS_BASE + k`.
pub const STREAM_BASIS_BASE: u64 = 1 << 48;

/// RNG for the given substream of a master seed.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// One splitmix64 step.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a salt.
///
/// Used to give each batch sample and each protocol mode its own master
/// seed without correlated streams.
pub fn mix(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt))
}
