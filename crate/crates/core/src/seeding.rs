//! Deterministic seed derivation and stable content hashing.
//!
//! Every randomized component of the crate derives its RNG seed from a root
//! seed plus a salt path, so re-running an experiment with the same spec and
//! seed reproduces it bit for bit.

/// SplitMix64 finalizer. Stable across platforms and releases; used for seed
/// derivation and as the documented ECMP/bottomline selection hash.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a root seed and a salt path.
pub fn derive_seed(root: u64, salts: &[u64]) -> u64 {
    let mut acc = mix64(root);
    for (i, s) in salts.iter().enumerate() {
        acc = mix64(acc ^ mix64(s.wrapping_add(i as u64 + 1)));
    }
    acc
}

/// FNV-1a over a byte slice, 64-bit. Used for content hashes in run manifests.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix64_is_stable() {
        assert_eq!(mix64(0), 0xe220a8397b1dcdaf);
        assert_ne!(mix64(1), mix64(2));
    }

    #[test]
    fn derive_seed_depends_on_path() {
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    }

    #[test]
    fn fnv64_matches_known_vector() {
        // FNV-1a("a") from the reference tables.
        assert_eq!(fnv64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
