//! Seeded random streams.
//!
//! Every source of randomness takes an explicit stream. Child streams are
//! derived from a parent seed and a tag through ChaCha's stream selector, so
//! derivation never consumes the parent and independent consumers can be
//! handed out in any order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Deterministically derives an independent seed from `(parent, tag)`.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    let mut rng = StreamRng::seed_from_u64(parent);
    rng.set_stream(tag);
    rng.next_u64()
}

/// Stream for the `tag`-th child of `parent`.
pub fn child_stream(parent: u64, tag: u64) -> StreamRng {
    stream(derive_seed(parent, tag))
}
