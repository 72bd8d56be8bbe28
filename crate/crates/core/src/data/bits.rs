//! Fixed-length bitvectors backing binarized columns, label masks and
//! capture sets.
//!
//! Storage is little-endian within 64-bit words: bit `i` lives in word
//! `i / 64` at position `i % 64`. Bits past `len` in the last word are
//! always zero, so word-wise popcounts never need masking.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

const WORD_BITS: usize = 64;

/// Popcount of word-wise combinations, dispatched at runtime to the widest
/// instruction set available. The baseline x86-64 target has no `popcnt`.
mod popcount {
    #[inline(always)]
    fn and_generic(a: &[u64], b: &[u64]) -> usize {
        a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as u64).sum::<u64>() as usize
    }

    #[inline(always)]
    fn and_not_generic(a: &[u64], b: &[u64]) -> usize {
        a.iter().zip(b).map(|(x, y)| (x & !y).count_ones() as u64).sum::<u64>() as usize
    }

    #[cfg(target_arch = "x86_64")]
    mod x86 {
        #[target_feature(enable = "avx2,popcnt")]
        pub fn and_avx2(a: &[u64], b: &[u64]) -> usize {
            super::and_generic(a, b)
        }

        #[target_feature(enable = "avx2,popcnt")]
        pub fn and_not_avx2(a: &[u64], b: &[u64]) -> usize {
            super::and_not_generic(a, b)
        }

        #[target_feature(enable = "popcnt")]
        pub fn and_popcnt(a: &[u64], b: &[u64]) -> usize {
            super::and_generic(a, b)
        }

        #[target_feature(enable = "popcnt")]
        pub fn and_not_popcnt(a: &[u64], b: &[u64]) -> usize {
            super::and_not_generic(a, b)
        }
    }

    #[inline]
    pub fn and(a: &[u64], b: &[u64]) -> usize {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("popcnt") {
                // SAFETY: the required CPU features were detected above.
                return unsafe { x86::and_avx2(a, b) };
            }
            if std::arch::is_x86_feature_detected!("popcnt") {
                // SAFETY: as above.
                return unsafe { x86::and_popcnt(a, b) };
            }
        }
        and_generic(a, b)
    }

    #[inline]
    pub fn and_not(a: &[u64], b: &[u64]) -> usize {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("popcnt") {
                // SAFETY: the required CPU features were detected above.
                return unsafe { x86::and_not_avx2(a, b) };
            }
            if std::arch::is_x86_feature_detected!("popcnt") {
                // SAFETY: as above.
                return unsafe { x86::and_not_popcnt(a, b) };
            }
        }
        and_not_generic(a, b)
    }
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits { words: vec![0; words_for(len)], len }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Bits { words: vec![u64::MAX; words_for(len)], len };
        b.clear_tail();
        b
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in iter {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if bit {
                words[len / WORD_BITS] |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        Bits { words, len }
    }

    /// Parses a string of `0`/`1` characters, bit 0 first.
    pub fn from_str01(s: &str) -> Self {
        Self::from_bools(s.chars().filter(|c| !c.is_whitespace()).map(|c| c == '1'))
    }

    /// Rebuilds a bitvector from little-endian bytes (as produced by
    /// [`Bits::to_bytes`]).
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, DataError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(DataError::LengthMismatch { expected: len.div_ceil(8), found: bytes.len() });
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, byte) in bytes.iter().enumerate() {
            words[i / 8] |= (*byte as u64) << (8 * (i % 8));
        }
        let mut b = Bits { words, len };
        b.clear_tail();
        Ok(b)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for i in 0..self.len.div_ceil(8) {
            out.push((self.words[i / 8] >> (8 * (i % 8))) as u8);
        }
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn all(&self) -> bool {
        self.count_ones() == self.len
    }

    pub fn and(&self, other: &Bits) -> Bits {
        debug_assert_eq!(self.len, other.len);
        Bits {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    pub fn and_not(&self, other: &Bits) -> Bits {
        debug_assert_eq!(self.len, other.len);
        Bits {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect(),
            len: self.len,
        }
    }

    pub fn or(&self, other: &Bits) -> Bits {
        debug_assert_eq!(self.len, other.len);
        Bits {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
            len: self.len,
        }
    }

    pub fn not(&self) -> Bits {
        let mut b = Bits { words: self.words.iter().map(|w| !w).collect(), len: self.len };
        b.clear_tail();
        b
    }

    /// `popcount(self & other)` without materializing the intersection.
    #[inline]
    pub fn count_and(&self, other: &Bits) -> usize {
        popcount::and(&self.words, &other.words)
    }

    /// `popcount(self & !other)` without materializing the difference.
    #[inline]
    pub fn count_and_not(&self, other: &Bits) -> usize {
        popcount::and_not(&self.words, &other.words)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD_BITS + tz)
                }
            })
        })
    }

    /// Keeps only the listed positions, in order; used for row selection.
    pub fn select(&self, indices: &[usize]) -> Bits {
        Bits::from_bools(indices.iter().map(|&i| self.get(i)))
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits(")?;
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        write!(f, ")")
    }
}

/// Which side of a binary column a child subproblem keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Zero,
    One,
}

/// The samples reaching a node of the tree (a subproblem of the search).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CaptureSet(Bits);

impl CaptureSet {
    /// The root capture set: every sample.
    pub fn all(n: usize) -> Self {
        CaptureSet(Bits::ones(n))
    }

    pub fn from_bits(bits: Bits) -> Self {
        CaptureSet(bits)
    }

    #[inline]
    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn into_bits(self) -> Bits {
        self.0
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.0.count_ones()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.none()
    }

    /// Restricts the set to samples whose column bit equals `polarity`.
    pub fn capture_and(&self, column: &Bits, polarity: Polarity) -> Result<CaptureSet, DataError> {
        if column.len() != self.0.len() {
            return Err(DataError::LengthMismatch { expected: self.0.len(), found: column.len() });
        }
        Ok(self.split_unchecked(column, polarity))
    }

    #[inline]
    pub(crate) fn split_unchecked(&self, column: &Bits, polarity: Polarity) -> CaptureSet {
        match polarity {
            Polarity::One => CaptureSet(self.0.and(column)),
            Polarity::Zero => CaptureSet(self.0.and_not(column)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capture_and_examples() {
        let s = CaptureSet::from_bits(Bits::from_str01("1111"));
        let col = Bits::from_str01("1010");
        assert_eq!(s.capture_and(&col, Polarity::One).unwrap().bits(), &Bits::from_str01("1010"));
        assert_eq!(s.capture_and(&col, Polarity::Zero).unwrap().bits(), &Bits::from_str01("0101"));
        let empty = CaptureSet::from_bits(Bits::zeros(4));
        for p in [Polarity::One, Polarity::Zero] {
            assert!(empty.capture_and(&col, p).unwrap().is_empty());
        }
    }

    #[test]
    fn capture_and_rejects_length_mismatch() {
        let s = CaptureSet::all(4);
        let err = s.capture_and(&Bits::zeros(5), Polarity::One).unwrap_err();
        assert!(matches!(err, DataError::LengthMismatch { expected: 4, found: 5 }));
    }

    #[test]
    fn ones_clears_tail() {
        let b = Bits::ones(70);
        assert_eq!(b.count_ones(), 70);
        assert_eq!(b.not().count_ones(), 0);
        assert!(b.all());
    }

    #[test]
    fn bytes_round_trip_with_ragged_tail() {
        let b = Bits::from_str01("1011001110001");
        let back = Bits::from_bytes(&b.to_bytes(), b.len()).unwrap();
        assert_eq!(b, back);
    }

    fn bits_strategy() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
        (1usize..200).prop_flat_map(|n| {
            (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n))
        })
    }

    proptest! {
        #[test]
        fn children_partition_parent((s, c) in bits_strategy()) {
            let s = CaptureSet::from_bits(Bits::from_bools(s));
            let col = Bits::from_bools(c);
            let one = s.capture_and(&col, Polarity::One).unwrap();
            let zero = s.capture_and(&col, Polarity::Zero).unwrap();
            prop_assert_eq!(&one.bits().or(zero.bits()), s.bits());
            prop_assert!(one.bits().and(zero.bits()).none());
            prop_assert!(one.count() <= s.count());
            prop_assert_eq!(one.count() + zero.count(), s.count());
        }

        #[test]
        fn iter_ones_matches_get(v in proptest::collection::vec(any::<bool>(), 0..300)) {
            let b = Bits::from_bools(v.iter().copied());
            let ones: Vec<usize> = b.iter_ones().collect();
            let expected: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect();
            prop_assert_eq!(ones, expected);
            prop_assert_eq!(b.count_ones(), v.iter().filter(|&&x| x).count());
        }
    }
}
