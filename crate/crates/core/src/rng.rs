//! Deterministic random-number streams.
//!
//! Every stochastic routine takes `&mut impl Rng`; simulations seed one
//! ChaCha12 stream per trajectory so results are reproducible bit-for-bit
//! for a given master seed regardless of worker count or platform.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG used by the simulator.
pub type SimRng = ChaCha12Rng;

/// SplitMix64 finalizer: a bijective avalanche mix of a 64-bit word.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trajectory `index` of a run: the master seed and index are
/// combined and avalanched so neighboring indices give unrelated streams.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Fresh ChaCha12 stream for trajectory `index`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(trajectory_seed(master_seed, index))
}
