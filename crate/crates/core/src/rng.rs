//! Seeded random streams.
//!
//! Every random consumer draws from its own ChaCha stream addressed by
//! `(seed, domain, index)`, so results depend only on the seed and the item
//! index, never on worker count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BOOTSTRAP: u64 = 0x6273_7472;
pub const PERMUTATION: u64 = 0x7065_726d;
pub const SYNTH_LAYOUT: u64 = 0x6c61_796f;
pub const SYNTH_NOISE: u64 = 0x6e6f_6973;
pub const SYNTH_CASE: u64 = 0x6361_7365;

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per generated case.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, index).next_u64()
}
