//! Seed discipline.
//!
//! Every repeat draws from its own ChaCha stream, keyed by
//! `2*repeat + mode_bit`, so repeats can run in any order (or in parallel)
//! without changing a single sample. Sweep drivers derive one seed per
//! sweep value with [`derive_seed`] so neighbouring settings never share a
//! stream either.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `index`-th output of a splitmix64 generator seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Independent stream for one repeat of one measurement mode.
pub(crate) fn repeat_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
