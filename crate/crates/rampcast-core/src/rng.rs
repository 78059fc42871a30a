//! Seeded RNG substreams.
//!
//! Every source of randomness in the crate derives from one top-level seed
//! plus a named stream and up to two indices (epoch, sample, day, ...). Two
//! runs with the same seed therefore draw identical values no matter how the
//! work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named randomness consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Weight initialization.
    Init,
    /// Per-epoch shuffling of training samples.
    Shuffle,
    /// Dropout masks.
    Dropout,
    /// Synthetic data generation.
    Synth,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Shuffle => 2,
            Stream::Dropout => 3,
            Stream::Synth => 4,
        }
    }
}

/// splitmix64 finalizer; decorrelates nearby inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for `(base seed, stream, a, b)`.
pub fn derive_seed(base: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut s = mix(base ^ 0x5256_4d50_4341_5354); // constant domain tag
    s = mix(s ^ stream.id());
    s = mix(s ^ a);
    mix(s ^ b)
}

/// RNG for a named substream.
pub fn stream_rng(base: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, a, b))
}
