//! Counter-based derivation of independent random streams.
//!
//! Every Monte Carlo draw is keyed by `(master_seed, region_id, month,
//! sample_index)`. The key is folded through SplitMix64 into a 64-bit seed
//! for a fresh ChaCha8 generator, so the value of any draw is independent of
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function (Steele, Lea & Flood).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over the UTF-8 bytes of a label.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

/// `seed = mix(mix(mix(mix(master) ^ fnv(label)) ^ slot) ^ index)` with `mix = splitmix64`.
pub fn stream_seed(master_seed: u64, label: &str, slot: u32, index: u64) -> u64 {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ fnv1a64(label.as_bytes()));
    h = splitmix64(h ^ u64::from(slot));
    splitmix64(h ^ index)
}

pub fn stream(master_seed: u64, label: &str, slot: u32, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master_seed, label, slot, index))
}
