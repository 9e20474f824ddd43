//! Seed derivation and random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`]. A system draw
//! is identified by a 64-bit seed; its matrix entries and its initial vector
//! are read from two distinct ChaCha streams of that seed ([`Stream::Matrix`]
//! and [`Stream::Initial`]), so neither consumes the other's randomness.
//!
//! Replica seeds are derived from `(master_seed, words...)` by folding every
//! word through the SplitMix64 finaliser. The derivation is a pure function,
//! which makes replica `r` reproducible in isolation regardless of how many
//! workers run or in which order replicas complete.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Matrix = 0,
    Initial = 1,
    /// Start vectors for the power iteration.
    Norm = 2,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &word| splitmix64(acc ^ splitmix64(word)))
}

/// Generator for one stream of one seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
