//! Seed derivation and per-stream generators.
//!
//! Every random draw in a simulation comes from a ChaCha8 generator keyed by
//! the replicate seed, with one stream per Fourier mode (and one per aliased
//! tail bin). Streams are independent, so the draws of a mode do not depend
//! on how many other modes are simulated or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`:
/// `splitmix64(master ^ splitmix64(index))`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Stream id offset for the aliased-tail bins.
pub const TAIL_STREAM_BASE: u64 = 1 << 40;

/// Generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
