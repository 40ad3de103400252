//! Deterministic random-number streams.
//!
//! Every stochastic routine in this crate takes an explicit 64-bit seed and,
//! where it runs replicas, a replica id. The pair maps to an independent
//! ChaCha stream, so results are reproducible bit for bit and replicas never
//! share randomness regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Independent stream for `(seed, stream)`. Streams with the same seed and
/// different ids never overlap; ChaCha keeps the stream id in a dedicated
/// counter word.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Single stream for routines that take just a seed.
pub fn single(seed: u64) -> Rng {
    stream(seed, 0)
}
