//! Deterministic seed derivation and RNG construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and an ordered list of indices.
///
/// Each index is folded in with a SplitMix64 round, so `derive(s, &[a, b])`
/// differs from `derive(s, &[b, a])`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(seed), |acc, &i| mix64(acc ^ mix64(i.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Named sub-streams so that, e.g., data draws and initialization never
/// share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Train = 3,
    Sample = 4,
    Reference = 5,
    Eval = 6,
    Critic = 7,
}

pub fn stream(seed: u64, s: Stream) -> u64 {
    derive(seed, &[s as u64])
}
