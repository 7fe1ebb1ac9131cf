//! Seeded random streams.
//!
//! Every stochastic routine draws from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and split into independent streams with
//! `set_stream(index)`. The algorithm is fixed so output files are
//! reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type RunRng = ChaCha20Rng;

/// Stream 0 of `seed`.
pub fn rng_from_seed(seed: u64) -> RunRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of `seed`.
pub fn split(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
