//! Seed splitting.
//!
//! Every random draw in a run descends from one user seed. Each consumer gets
//! its own ChaCha8 stream of that seed, so adding draws to one component never
//! shifts the sequence seen by another.
//!
//! | stream              | consumer                         |
//! |---------------------|----------------------------------|
//! | 1                   | actor initialization             |
//! | 2                   | critic initialization            |
//! | 3                   | replay minibatch sampling        |
//! | 4                   | minibatch sampling while trading |
//! | 5                   | synthetic price generation       |
//! | 1000 + episode      | exploration noise of an episode  |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_ACTOR_INIT: u64 = 1;
pub const STREAM_CRITIC_INIT: u64 = 2;
pub const STREAM_REPLAY: u64 = 3;
pub const STREAM_ONLINE_REPLAY: u64 = 4;
pub const STREAM_SYNTHETIC: u64 = 5;
pub const STREAM_NOISE_BASE: u64 = 1000;

pub fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a 64-bit seed for a component that wants to own its generator.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    component_rng(seed, stream).next_u64()
}
