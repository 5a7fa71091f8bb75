//! Deterministic seed derivation for independent random streams.
//!
//! A stream is identified by `(master seed, trial index, tag)`. The ChaCha
//! key is `splitmix64(master ^ splitmix64(trial + 1))` expanded by
//! `seed_from_u64`, and the tag selects the ChaCha stream, so streams with
//! distinct tags never overlap even under the same key.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Stream tags used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Weights = 1,
    Initial = 2,
    Inputs = 3,
    Noise = 4,
    Oracle = 5,
    LimitSample = 6,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ splitmix64(trial.wrapping_add(1)))
}

pub fn stream_rng(master: u64, trial: u64, tag: Stream) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(master, trial));
    rng.set_stream(tag as u64);
    rng
}
