//! Seeded, platform-independent randomness.
//!
//! Every random draw in the crate goes through an explicit `(seed, stream)`
//! pair so that concurrent callers never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A ChaCha8 generator keyed by `seed` and positioned on an independent `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable sub-seed derived from a parent seed and labelled parts.
///
/// Parts are length-prefixed before hashing so `["ab", "c"]` and `["a", "bc"]`
/// never collide.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(42, 0).random();
        let b: u64 = stream_rng(42, 0).random();
        let c: u64 = stream_rng(42, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derive_seed_is_prefix_safe() {
        assert_eq!(derive_seed(1, &[b"x"]), derive_seed(1, &[b"x"]));
        assert_ne!(derive_seed(1, &[b"ab", b"c"]), derive_seed(1, &[b"a", b"bc"]));
        assert_ne!(derive_seed(1, &[b"x"]), derive_seed(2, &[b"x"]));
    }
}
