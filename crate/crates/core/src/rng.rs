//! Seeded random streams.
//!
//! Each consumer draws from its own ChaCha20 stream keyed by the run seed,
//! so generating data never perturbs model initialization or shuffling and
//! vice versa.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Named purposes with disjoint stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    TaskLayout = 1,
    TrainData = 2,
    TestData = 3,
    ModelInit = 4,
    Shuffle = 5,
    Oracle = 6,
    Diagnostic = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of the `index`-th replicate of some repeated procedure.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Stream for the `index`-th replicate of some repeated procedure.
pub fn replicate_rng(seed: u64, stream: Stream, index: u64) -> ChaCha20Rng {
    stream_rng(replicate_seed(seed, index), stream)
}
