//! Explicit, splittable seeding. Every random draw in the crate comes from a
//! generator built here; there is no ambient global RNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based child seed: a pure function of the parent seed and a path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn rng_from(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(seed: u64, path: &[u64]) -> SeededRng {
    rng_from(derive_seed(seed, path))
}

/// Uniform draw from `[-hi, -lo] ∪ [lo, hi]`.
pub fn symmetric_band<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let mag = rng.gen_range(lo..=hi);
    if rng.gen_bool(0.5) {
        -mag
    } else {
        mag
    }
}

/// Uniform draw from the union of two disjoint intervals, each chosen with
/// probability proportional to its length.
pub fn union_of_intervals<R: Rng + ?Sized>(rng: &mut R, a: (f64, f64), b: (f64, f64)) -> f64 {
    let la = a.1 - a.0;
    let lb = b.1 - b.0;
    let u = rng.gen_range(0.0..(la + lb));
    if u < la {
        a.0 + u
    } else {
        (b.0 + (u - la)).min(b.1)
    }
}

/// Stable 64-bit FNV-1a hash, used to fold strings into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
