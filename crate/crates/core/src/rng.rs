//! Seedable 64-bit-state PRNG with deterministic stream splitting.
//!
//! Every randomized operation takes a caller-owned [`Rng64`]. Batch code derives
//! one child stream per item with [`split`], so results do not depend on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

pub type Rng64 = SplitMix64;

pub fn seeded(seed: u64) -> Rng64 {
    SplitMix64::seed_from_u64(seed)
}

/// Derives an independent child stream from `(seed, stream)`.
pub fn split(seed: u64, stream: u64) -> Rng64 {
    seeded(mix(seed ^ mix(stream.wrapping_add(0x9E37_79B9_7F4A_7C15))))
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
