//! Seeded random streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream derived
//! from the run seed, so e.g. genetic operators never perturb action sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers. Environment streams are offset by the actor index.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const GENETICS: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const MINIBATCH: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const ENV_BASE: u64 = 1 << 20;
    pub const EVAL_ENV_BASE: u64 = 1 << 21;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent per-slot seed derived from a run seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
