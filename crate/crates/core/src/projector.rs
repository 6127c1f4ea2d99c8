//! Locality-sensitive binary projections of words.
//!
//! A word is turned into a sparse bag of hashed character features, then
//! into `T * d` sign bits, each the sign of a Rademacher-weighted sum over
//! the features. The ±1 weights are recomputed from hashes on every call,
//! so no matrix is stored and the cost is independent of any vocabulary.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hash::{combine, seeded_hash};

pub const DEFAULT_NUM_PROJECTIONS: usize = 80;
pub const DEFAULT_BITS_PER_PROJECTION: usize = 14;
pub const DEFAULT_PROJECTION_SEED: u64 = 0x005e_ed0f_1ec7;

const WORD_START: char = '^';
const WORD_END: char = '$';
const SKIP_BIGRAM_TAG: u8 = 0xff;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub num_projections: usize,
    pub bits_per_projection: usize,
    /// Character n-gram orders, ascending and distinct.
    pub ngram_orders: Vec<usize>,
    /// Also emit skip-1 character bigrams.
    pub skipgram: bool,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self {
            seed: DEFAULT_PROJECTION_SEED,
            num_projections: DEFAULT_NUM_PROJECTIONS,
            bits_per_projection: DEFAULT_BITS_PER_PROJECTION,
            ngram_orders: vec![1, 2, 3, 4],
            skipgram: true,
        }
    }
}

impl ProjectionSpec {
    pub fn total_bits(&self) -> usize {
        self.num_projections * self.bits_per_projection
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_projections == 0 || self.bits_per_projection == 0 {
            return Err(Error::InvalidArgument(
                "projection needs at least one function and one bit".into(),
            ));
        }
        if self.ngram_orders.is_empty() && !self.skipgram {
            return Err(Error::InvalidArgument("projection has no features".into()));
        }
        if self.ngram_orders.iter().any(|&n| n == 0 || n > 255) {
            return Err(Error::InvalidArgument("n-gram orders must be in 1..=255".into()));
        }
        if self.ngram_orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "n-gram orders must be strictly ascending".into(),
            ));
        }
        Ok(())
    }

    /// Feature strings of `word`, in extraction order, before hashing.
    pub fn feature_strings(&self, word: &str) -> Result<Vec<Feature>> {
        if word.trim().is_empty() {
            return Err(Error::EmptyInput("word"));
        }
        let marked: Vec<char> = std::iter::once(WORD_START)
            .chain(word.chars())
            .chain(std::iter::once(WORD_END))
            .collect();
        let mut out = Vec::new();
        for &n in &self.ngram_orders {
            for gram in marked.windows(n) {
                out.push(Feature {
                    kind: FeatureKind::Ngram(n as u8),
                    text: gram.iter().collect(),
                });
            }
        }
        if self.skipgram {
            for w in marked.windows(3) {
                out.push(Feature {
                    kind: FeatureKind::SkipBigram,
                    text: [w[0], w[2]].iter().collect(),
                });
            }
        }
        Ok(out)
    }

    /// Hashed features of `word` with their multiplicities.
    pub fn extract_features(&self, word: &str) -> Result<BTreeMap<u64, u32>> {
        let mut out = BTreeMap::new();
        for f in self.feature_strings(word)? {
            *out.entry(f.id(self.seed)).or_insert(0) += 1;
        }
        Ok(out)
    }

    /// The ±1 weight of feature `feature_id` in bit `(t, j)`.
    #[inline]
    pub fn sign(&self, feature_id: u64, t: usize, j: usize) -> i32 {
        let bit = t * self.bits_per_projection + j;
        if sign_block(self.seed, feature_id, bit / 64) >> (bit % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn project(&self, word: &str) -> Result<BinaryProjection> {
        self.validate()?;
        let features = self.extract_features(word)?;
        let total = self.total_bits();
        let mut sums = vec![0i64; total];
        for (&fid, &count) in &features {
            let count = i64::from(count);
            for (block, chunk) in sums.chunks_mut(64).enumerate() {
                let signs = sign_block(self.seed, fid, block);
                for (k, s) in chunk.iter_mut().enumerate() {
                    if signs >> k & 1 == 1 {
                        *s += count;
                    } else {
                        *s -= count;
                    }
                }
            }
        }
        let mut bits = BinaryProjection::zeros(total);
        for (i, &s) in sums.iter().enumerate() {
            if s > 0 {
                bits.set(i);
            }
        }
        Ok(bits)
    }
}

#[inline]
fn sign_block(seed: u64, feature_id: u64, block: usize) -> u64 {
    combine(feature_id ^ seed, block as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Ngram(u8),
    SkipBigram,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    pub kind: FeatureKind,
    pub text: String,
}

impl Feature {
    pub fn id(&self, seed: u64) -> u64 {
        let tag = match self.kind {
            FeatureKind::Ngram(n) => n,
            FeatureKind::SkipBigram => SKIP_BIGRAM_TAG,
        };
        seeded_hash(seed, tag, self.text.as_bytes())
    }
}

/// Packed bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryProjection {
    len: usize,
    words: Vec<u64>,
}

impl BinaryProjection {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut p = Self::zeros(len);
        (0..len).for_each(|i| p.set(i));
        p
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "projection widths differ");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Zero-centered encoder input: 1 ↦ +1.0, 0 ↦ −1.0.
    pub fn to_input(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len);
        self.write_input(&mut out);
        out
    }

    pub fn write_input(&self, out: &mut Vec<f64>) {
        out.extend((0..self.len).map(|i| if self.get(i) { 1.0 } else { -1.0 }));
    }
}
