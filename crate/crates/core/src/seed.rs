//! Deterministic seed derivation and keyed index permutations.
//!
//! A single master seed fans out into independent stream seeds, one per
//! gadget and one per vertex ordering, through a keyed counter construction.
//! The derivation is pure integer arithmetic so instances are reproducible
//! bit-for-bit across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domains for derived streams. Values are stable; they are part of the
/// reproducibility contract of the instance format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Gadget = 1,
    VertexPermutation = 2,
    GameTrial = 3,
    AbstainCoin = 4,
    Probe = 5,
}

/// splitmix64 finalizer; good avalanche, trivially portable.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` for stream `kind` with a structured tag.
pub fn derive_seed(master: u64, kind: StreamKind, tag: u64) -> u64 {
    let mut h = mix64(master ^ 0x6d62_6e64_5f76_3031); // "mbnd_v01"
    h = mix64(h ^ (kind as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    mix64(h ^ tag)
}

/// Stable tag for a gadget instantiated during construction.
///
/// `path` encodes the position in the recursion (one entry per level:
/// family id and copy index), `slot` distinguishes gadgets within a level.
pub fn gadget_tag(path: &[(u32, u64)], slot: u64) -> u64 {
    let mut h = 0x1003_f84e_b01du64;
    for &(family, copy) in path {
        h = mix64(h ^ (family as u64));
        h = mix64(h ^ copy);
    }
    mix64(h ^ slot)
}

/// ChaCha stream for a derived seed.
pub fn rng_from(master: u64, kind: StreamKind, tag: u64) -> ChaCha8Rng {
    let s = derive_seed(master, kind, tag);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&s.to_le_bytes());
    key[8..16].copy_from_slice(&mix64(s).to_le_bytes());
    key[16..24].copy_from_slice(&mix64(s ^ 0xa5a5_a5a5_a5a5_a5a5).to_le_bytes());
    key[24..32].copy_from_slice(&mix64(s ^ 0x5a5a_5a5a_5a5a_5a5a).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// A keyed pseudo-random bijection on `[0, n)`.
///
/// Four-round Feistel network over the smallest even-width binary domain
/// covering `n`, with cycle walking to stay inside `[0, n)`. Evaluation is
/// O(1) expected time and needs no state proportional to `n`, so a vertex
/// with millions of neighbors costs nothing until queried.
#[derive(Debug, Clone, Copy)]
pub struct IndexPermutation {
    n: u64,
    half_bits: u32,
    keys: [u64; 4],
}

impl IndexPermutation {
    pub fn new(n: u64, seed: u64) -> Self {
        let bits = 64 - n.saturating_sub(1).leading_zeros();
        let half_bits = (bits.max(2) + 1) / 2;
        let keys = [
            mix64(seed ^ 0x01),
            mix64(seed ^ 0x02),
            mix64(seed ^ 0x03),
            mix64(seed ^ 0x04),
        ];
        IndexPermutation { n, half_bits, keys }
    }

    #[inline]
    fn feistel(&self, x: u64) -> u64 {
        let mask = (1u64 << self.half_bits) - 1;
        let mut left = (x >> self.half_bits) & mask;
        let mut right = x & mask;
        for k in self.keys {
            let f = mix64(right ^ k) & mask;
            let new_right = left ^ f;
            left = right;
            right = new_right;
        }
        (left << self.half_bits) | right
    }

    /// Image of `i` under the permutation. `i` must be `< n`.
    pub fn apply(&self, i: u64) -> u64 {
        debug_assert!(i < self.n);
        if self.n <= 1 {
            return i;
        }
        let mut x = self.feistel(i);
        while x >= self.n {
            x = self.feistel(x);
        }
        x
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn permutation_is_bijective() {
        for n in [0u64, 1, 2, 3, 7, 64, 100, 1023] {
            let p = IndexPermutation::new(n, 0xdead_beef ^ n);
            let seen: HashSet<u64> = (0..n).map(|i| p.apply(i)).collect();
            assert_eq!(seen.len() as u64, n);
            assert!(seen.iter().all(|&x| x < n));
        }
    }

    #[test]
    fn permutation_is_seed_sensitive() {
        let a = IndexPermutation::new(1000, 1);
        let b = IndexPermutation::new(1000, 2);
        let same = (0..1000).filter(|&i| a.apply(i) == b.apply(i)).count();
        assert!(same < 100, "orderings for distinct seeds nearly identical");
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a = derive_seed(7, StreamKind::Gadget, 0);
        let b = derive_seed(7, StreamKind::VertexPermutation, 0);
        let c = derive_seed(8, StreamKind::Gadget, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rng_reproducible() {
        use rand::RngCore;
        let mut r1 = rng_from(42, StreamKind::Gadget, 9);
        let mut r2 = rng_from(42, StreamKind::Gadget, 9);
        assert_eq!(r1.next_u64(), r2.next_u64());
    }
}
