//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha stream keyed by the run seed and
//! a stream id, so independent consumers (one per epoch, one per batch) never
//! share state and can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeaRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from `seed`.
pub fn stream(seed: u64, stream_id: u64) -> SeaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for batch `batch` of epoch `epoch`; epoch-level streams use
/// `batch == u32::MAX`.
pub fn batch_stream_id(epoch: usize, batch: usize) -> u64 {
    ((epoch as u64) << 32) | (batch as u64 & 0xffff_ffff)
}
