//! Character-level perturbations that imitate common misspellings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbKind {
    Insert,
    Swap,
    Duplicate,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 3] = [PerturbKind::Insert, PerturbKind::Swap, PerturbKind::Duplicate];
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbKind::Insert => "insert",
            PerturbKind::Swap => "swap",
            PerturbKind::Duplicate => "duplicate",
        })
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "insert" => Ok(PerturbKind::Insert),
            "swap" => Ok(PerturbKind::Swap),
            "duplicate" => Ok(PerturbKind::Duplicate),
            _ => Err(Error::InvalidArgument(format!(
                "unknown perturbation {s:?} (expected insert, swap or duplicate)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbOp {
    pub kind: PerturbKind,
    pub n: usize,
}

impl PerturbOp {
    pub fn apply<R: Rng + ?Sized>(&self, word: &str, chars: &CharVocab, rng: &mut R) -> Result<String> {
        match self.kind {
            PerturbKind::Insert => Ok(insert(word, self.n, chars, rng)),
            PerturbKind::Swap => Ok(swap(word, self.n, rng)),
            PerturbKind::Duplicate => duplicate(word, self.n, rng),
        }
    }
}

/// Characters eligible for insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab(Vec<char>);

impl CharVocab {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut v: Vec<char> = chars.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(Error::EmptyInput("character vocabulary"));
        }
        Ok(Self(v))
    }

    pub fn chars(&self) -> &[char] {
        &self.0
    }
}

impl Default for CharVocab {
    fn default() -> Self {
        Self(('a'..='z').collect())
    }
}

/// Inserts `n` random characters strictly between the first and last
/// character. Words shorter than two characters are returned unchanged.
pub fn insert<R: Rng + ?Sized>(word: &str, n: usize, chars: &CharVocab, rng: &mut R) -> String {
    let mut w: Vec<char> = word.chars().collect();
    if w.len() < 2 {
        return word.to_owned();
    }
    for _ in 0..n {
        let c = chars.0[rng.random_range(0..chars.0.len())];
        // Insertion index in 1..len keeps both ends in place.
        let at = rng.random_range(1..w.len());
        w.insert(at, c);
    }
    w.into_iter().collect()
}

/// Applies `n` transpositions of two distinct interior characters. Words
/// shorter than four characters are returned unchanged.
pub fn swap<R: Rng + ?Sized>(word: &str, n: usize, rng: &mut R) -> String {
    let mut w: Vec<char> = word.chars().collect();
    if w.len() < 4 {
        return word.to_owned();
    }
    let interior = w.len() - 2;
    for _ in 0..n {
        let i = 1 + rng.random_range(0..interior);
        let mut j = 1 + rng.random_range(0..interior - 1);
        if j >= i {
            j += 1;
        }
        w.swap(i, j);
    }
    w.into_iter().collect()
}

/// Repeats a randomly chosen character next to itself, `n` times. Any
/// position may be chosen, including the ends.
pub fn duplicate<R: Rng + ?Sized>(word: &str, n: usize, rng: &mut R) -> Result<String> {
    let mut w: Vec<char> = word.chars().collect();
    if w.is_empty() {
        return Err(Error::EmptyInput("word"));
    }
    for _ in 0..n {
        let at = rng.random_range(0..w.len());
        w.insert(at + 1, w[at]);
    }
    Ok(w.into_iter().collect())
}

/// With probability `prob`, applies one uniformly chosen operation with
/// `n = 1`. Returns the chosen kind, if any.
pub fn maybe_perturb_with_kind<R: Rng + ?Sized>(
    word: &str,
    prob: f64,
    chars: &CharVocab,
    rng: &mut R,
) -> (String, Option<PerturbKind>) {
    if prob <= 0.0 || rng.random::<f64>() >= prob {
        return (word.to_owned(), None);
    }
    let kind = PerturbKind::ALL[rng.random_range(0..3)];
    match (PerturbOp { kind, n: 1 }).apply(word, chars, rng) {
        Ok(w) => (w, Some(kind)),
        Err(_) => (word.to_owned(), Some(kind)),
    }
}

pub fn maybe_perturb<R: Rng + ?Sized>(word: &str, prob: f64, chars: &CharVocab, rng: &mut R) -> String {
    maybe_perturb_with_kind(word, prob, chars, rng).0
}
