use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::data::{Bits, CaptureSet};

/// Identity of a subproblem: a 128-bit digest of the capture set plus the
/// remaining depth budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubproblemKey {
    pub digest: u128,
    pub depth: u32,
}

impl SubproblemKey {
    pub fn hex(&self) -> String {
        format!("{:032x}:{}", self.digest, self.depth)
    }
}

fn half(tag: u64, bits: &Bits) -> u64 {
    let mut h = DefaultHasher::new();
    tag.hash(&mut h);
    bits.len().hash(&mut h);
    bits.words().hash(&mut h);
    h.finish()
}

pub(crate) fn key_of(bits: &Bits, depth: usize) -> SubproblemKey {
    let hi = half(0x9e37_79b9_7f4a_7c15, bits) as u128;
    let lo = half(0xc2b2_ae3d_27d4_eb4f, bits) as u128;
    SubproblemKey { digest: (hi << 64) | lo, depth: depth as u32 }
}

/// Canonical cache key for `(s, depth)`. Equal inputs give equal keys; the
/// cache additionally stores the bits so a digest collision is detected.
pub fn canonical_key(s: &CaptureSet, depth: usize) -> SubproblemKey {
    key_of(s.bits(), depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_bits_same_key() {
        let s = CaptureSet::from_bits(Bits::from_str01("1011001"));
        assert_eq!(canonical_key(&s, 2), canonical_key(&s.clone(), 2));
    }

    #[test]
    fn one_bit_changes_the_key() {
        let a = CaptureSet::from_bits(Bits::from_str01("1011001"));
        let b = CaptureSet::from_bits(Bits::from_str01("1011000"));
        assert_ne!(canonical_key(&a, 2), canonical_key(&b, 2));
    }

    #[test]
    fn depth_is_part_of_the_key() {
        let s = CaptureSet::from_bits(Bits::from_str01("1011001"));
        assert_ne!(canonical_key(&s, 1), canonical_key(&s, 2));
    }

    #[test]
    fn length_is_part_of_the_key() {
        let a = CaptureSet::from_bits(Bits::from_str01("10"));
        let b = CaptureSet::from_bits(Bits::from_str01("100"));
        assert_ne!(canonical_key(&a, 1), canonical_key(&b, 1));
    }
}
