//! Seed derivation for independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `seed` for the stream called `tag`.
pub fn derive(seed: u64, tag: &str) -> u64 {
    tag.bytes()
        .fold(mix(seed), |h, b| mix(h ^ u64::from(b)))
}

/// Derives a sub-seed for the `index`-th member of a family.
pub fn derive_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    mix(derive(seed, tag) ^ index.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(derive(1, "corpus"), derive(1, "participants"));
        assert_ne!(derive(1, "corpus"), derive(2, "corpus"));
        assert_ne!(derive_indexed(1, "p", 0), derive_indexed(1, "p", 1));
        assert_eq!(derive_indexed(5, "p", 3), derive_indexed(5, "p", 3));
    }
}
