//! Seed handling. Every random draw in the crate comes from a ChaCha stream
//! derived from a root seed and a named sub-stream, so components stay
//! reproducible independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams hanging off a root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Init,
    Noise,
    Dropout,
    Sbm,
    Eval,
    Oracle,
    Experiment,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Split => 0x5350_4c49,
            Stream::Init => 0x494e_4954,
            Stream::Noise => 0x4e4f_4953,
            Stream::Dropout => 0x4452_4f50,
            Stream::Sbm => 0x0053_424d,
            Stream::Eval => 0x4556_414c,
            Stream::Oracle => 0x4f52_4143,
            Stream::Experiment => 0x4558_5052,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed, a stream, and an index.
pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(seed ^ stream.tag()).wrapping_add(index))
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(derive(seed, stream, 0))
}

pub fn indexed(seed: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, stream, index))
}
