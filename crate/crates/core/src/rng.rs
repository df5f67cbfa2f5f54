//! Seeded randomness.
//!
//! Every random choice in the crate goes through [`Xoshiro256PlusPlus`]
//! seeded from a 64-bit integer. Uniform integers are always drawn over
//! `u64` ranges so results do not depend on the platform's pointer width.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-document seed: `seed XOR fnv1a(doc_id)`.
pub fn doc_seed(seed: u64, doc_id: &str) -> u64 {
    seed ^ fnv1a(doc_id.as_bytes())
}

/// Stage seed derived from the master seed and a stage name.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    splitmix64(master ^ fnv1a(stage.as_bytes()))
}

/// One SplitMix64 step, used to decorrelate derived seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform index in `0..n`. `n` must be positive.
pub fn index(rng: &mut SeededRng, n: usize) -> usize {
    debug_assert!(n > 0);
    rng.random_range(0..n as u64) as usize
}

/// Uniform sample of `k` distinct positions from `0..n`, returned in draw order.
///
/// Partial Fisher-Yates over an index vector.
pub fn sample_without_replacement(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + index(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut SeededRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
