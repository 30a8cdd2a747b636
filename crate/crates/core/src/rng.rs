//! Seeded randomness shared by every stochastic component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MilRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> MilRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed for `(seed, a, b)`; distinct inputs give
/// well-separated streams.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let h = mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let h = mix(h ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    mix(h ^ b.wrapping_mul(0xd1b5_4a32_d192_ed03))
}
