//! Deterministic random-number plumbing.
//!
//! Every randomized component draws from a `ChaCha8Rng` seeded through
//! [`derive_seed`], so a single configured seed reproduces an entire run
//! bit-for-bit in single-threaded mode.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive a child seed from a base seed, a purpose tag, and an index.
///
/// FNV-1a over the tag folded with a splitmix64 finalizer. Different tags or
/// indices give statistically independent streams; the derivation is stable
/// and documented so runs are reproducible across versions of this crate.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(base ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, "mask", 0);
        let b = derive_seed(7, "mask", 1);
        let c = derive_seed(7, "mixer", 0);
        assert_eq!(a, derive_seed(7, "mask", 0));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut r1 = rng_from_seed(42);
        let mut r2 = rng_from_seed(42);
        for _ in 0..100 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
    }
}
