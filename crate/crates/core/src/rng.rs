//! Seed derivation shared by every randomized component.
//!
//! A stream is a ChaCha8 generator seeded from the root seed with its
//! 64-bit stream id set to the unit index (tree, label, fold, stage). Streams
//! for different indices never overlap, so parallel units draw exactly what
//! they would draw serially.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(root_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for unit `index`, used when a unit needs its own sub-streams.
pub fn derive_seed(root_seed: u64, index: u64) -> u64 {
    stream_rng(root_seed, index).next_u64()
}
