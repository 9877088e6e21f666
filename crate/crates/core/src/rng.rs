//! Counter-based stream splitting: one master seed, one independent ChaCha
//! stream per work chunk, so serial and parallel runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for chunk `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of fading blocks per Monte Carlo chunk.
pub const CHUNK_BLOCKS: usize = 4096;
