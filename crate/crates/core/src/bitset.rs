//! Fixed-length bitset over domain indices.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dims, Error, Result};

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitset {
    len: usize,
    words: Vec<u64>,
}

impl Bitset {
    pub fn empty(len: usize) -> Self {
        Bitset { len, words: vec![0; len.div_ceil(WORD)] }
    }

    pub fn full(len: usize) -> Self {
        let mut set = Bitset { len, words: vec![u64::MAX; len.div_ceil(WORD)] };
        set.clear_tail();
        set
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = Bitset::empty(len);
        for i in indices {
            if i >= len {
                return Err(Error::RecordOutOfRange { row: i, index: i, size: len });
            }
            set.insert(i);
        }
        Ok(set)
    }

    pub fn from_predicate(len: usize, mut pred: impl FnMut(usize) -> bool) -> Self {
        let mut set = Bitset::empty(len);
        for i in 0..len {
            if pred(i) {
                set.insert(i);
            }
        }
        set
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Number of members.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.len
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.len && (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of bitset range {}", self.len);
        self.words[i / WORD] |= 1u64 << (i % WORD);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        if i < self.len {
            self.words[i / WORD] &= !(1u64 << (i % WORD));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        iter_words(self.words.iter().copied())
    }

    pub fn union_with(&mut self, other: &Bitset) -> Result<()> {
        check_dims(self.len, other.len)?;
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
        Ok(())
    }

    pub fn intersect_with(&mut self, other: &Bitset) -> Result<()> {
        check_dims(self.len, other.len)?;
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= b);
        Ok(())
    }

    pub fn difference_with(&mut self, other: &Bitset) -> Result<()> {
        check_dims(self.len, other.len)?;
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= !b);
        Ok(())
    }

    pub fn intersection(&self, other: &Bitset) -> Result<Bitset> {
        let mut out = self.clone();
        out.intersect_with(other)?;
        Ok(out)
    }

    pub fn union(&self, other: &Bitset) -> Result<Bitset> {
        let mut out = self.clone();
        out.union_with(other)?;
        Ok(out)
    }

    pub fn difference(&self, other: &Bitset) -> Result<Bitset> {
        let mut out = self.clone();
        out.difference_with(other)?;
        Ok(out)
    }

    pub fn is_subset(&self, other: &Bitset) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &Bitset) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    /// Whether `self ∩ other` is nonempty.
    pub fn intersects(&self, other: &Bitset) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn to_indices(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

/// Iterates the set bit positions of a word stream.
pub(crate) fn iter_words(words: impl Iterator<Item = u64>) -> impl Iterator<Item = usize> {
    words.enumerate().flat_map(|(wi, mut w)| {
        std::iter::from_fn(move || {
            if w == 0 {
                None
            } else {
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD + tz)
            }
        })
    })
}

impl std::fmt::Debug for Bitset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Bitset({})", self.len)?;
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Serialize, Deserialize)]
struct BitsetRepr {
    len: usize,
    members: Vec<usize>,
}

impl Serialize for Bitset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BitsetRepr { len: self.len, members: self.to_indices() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bitset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = BitsetRepr::deserialize(d)?;
        Bitset::from_indices(repr.len, repr.members).map_err(serde::de::Error::custom)
    }
}
