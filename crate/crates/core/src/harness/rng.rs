//! Seed derivation.
//!
//! Every trial gets its own 64-bit seed, a SplitMix64 hash of
//! `master + (trial + 1)·γ`. Inside a trial, each random quantity is drawn from
//! its own ChaCha8 stream keyed by that seed, so changing one stage (for
//! example the alphabet) leaves the other stages' draws untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    mix64(master_seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent random stages of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 0,
    Phase = 1,
    Scattering = 2,
    Frame = 3,
    Noise = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
