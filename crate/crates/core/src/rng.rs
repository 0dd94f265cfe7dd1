//! Counter-derived random streams.
//!
//! Every episode draws from its own ChaCha stream keyed by
//! `(master seed, iteration, slot)`, so results never depend on how episodes
//! are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent stream for episode `slot` of iteration `iteration`.
pub fn episode_stream(seed: u64, iteration: u64, slot: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&iteration.to_le_bytes());
    key[16..24].copy_from_slice(&slot.to_le_bytes());
    // Tag distinguishes these keys from plain `seed_from_u64` streams.
    key[24..32].copy_from_slice(b"cvar-ssp");
    ChaCha8Rng::from_seed(key)
}

/// Single sequential stream for a whole run.
pub fn master_stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
