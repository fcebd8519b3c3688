//! Deterministic per-sample random streams.
//!
//! Every sample index gets its own ChaCha stream derived from the run seed, so
//! results do not depend on how samples are distributed over worker threads and
//! a run with more samples extends (never reshuffles) a run with fewer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream tagged with a purpose, so two estimators sharing a seed do not reuse
/// the same draws.
pub fn tagged(seed: u64, tag: u64, index: u64) -> Rng {
    stream(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15), index)
}
