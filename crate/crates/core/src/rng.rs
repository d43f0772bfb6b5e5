//! Seed handling.
//!
//! Every random decision in the crate derives from one 64-bit seed. Each
//! stage gets its own stream: the stage name is folded into the seed with
//! SplitMix64 and the result seeds a ChaCha8 generator, so adding a new
//! consumer never perturbs the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the named stream derived from `seed`.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    let mut state = splitmix64(seed);
    for b in stream.bytes() {
        state = splitmix64(state ^ u64::from(b));
    }
    state
}

pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream))
}
