//! Corpus ingestion: vocabulary, subsampling, the negative-sampling noise
//! distribution and the (target, context) pair stream.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alias::AliasTable;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_VOCAB: usize = 100_000;
pub const DEFAULT_SUBSAMPLE_T: f64 = 1e-5;
pub const NOISE_EXPONENT: f64 = 0.75;

/// Calls `f` on every ASCII-whitespace separated token of `reader`.
pub fn for_each_token<R: Read>(reader: R, mut f: impl FnMut(&str)) -> Result<()> {
    let mut reader = BufReader::new(reader);
    let mut line = Vec::new();
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        let text = std::str::from_utf8(&line)
            .map_err(|e| Error::InvalidArgument(format!("corpus is not UTF-8: {e}")))?;
        text.split_ascii_whitespace().for_each(&mut f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    id_of: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `max_vocab` most frequent tokens. `total_tokens` counts
    /// every token, including the ones that fall outside the vocabulary.
    pub fn build<I, S>(tokens: I, max_vocab: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counter: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for token in tokens {
            let token = token.as_ref();
            total += 1;
            match counter.get_mut(token) {
                Some(c) => *c += 1,
                None => {
                    counter.insert(token.to_owned(), 1);
                }
            }
        }
        Self::from_counter(counter, total, max_vocab)
    }

    /// Builds a vocabulary directly from a text stream.
    pub fn from_reader<R: Read>(reader: R, max_vocab: usize) -> Result<Self> {
        let mut counter: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for_each_token(reader, |token| {
            total += 1;
            match counter.get_mut(token) {
                Some(c) => *c += 1,
                None => {
                    counter.insert(token.to_owned(), 1);
                }
            }
        })?;
        Self::from_counter(counter, total, max_vocab)
    }

    fn from_counter(counter: HashMap<String, u64>, total: u64, max_vocab: usize) -> Result<Self> {
        if max_vocab == 0 {
            return Err(Error::InvalidArgument("max_vocab must be at least 1".into()));
        }
        if total == 0 {
            return Err(Error::EmptyInput("corpus"));
        }
        let mut entries: Vec<(String, u64)> = counter.into_iter().collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(max_vocab);
        Self::from_sorted(entries, total)
    }

    /// `entries` must already be in vocabulary order.
    fn from_sorted(entries: Vec<(String, u64)>, total_tokens: u64) -> Result<Self> {
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut id_of = HashMap::with_capacity(entries.len());
        for (i, (w, c)) in entries.into_iter().enumerate() {
            if id_of.insert(w.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word {w:?}")));
            }
            words.push(w);
            counts.push(c);
        }
        Ok(Self {
            words,
            counts,
            total_tokens,
            id_of,
        })
    }

    /// Builds from explicit `(word, count)` pairs, re-sorting them into
    /// vocabulary order.
    pub fn from_counts(mut entries: Vec<(String, u64)>, total_tokens: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("vocabulary"));
        }
        let sum: u64 = entries.iter().map(|e| e.1).sum();
        if total_tokens < sum {
            return Err(Error::InvalidArgument(format!(
                "total_tokens {total_tokens} is smaller than the summed counts {sum}"
            )));
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_sorted(entries, total_tokens)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Replaces the corpus size, e.g. after re-scanning the corpus a
    /// vocabulary file was built from.
    pub fn set_total_tokens(&mut self, total_tokens: u64) -> Result<()> {
        let sum: u64 = self.counts.iter().sum();
        if total_tokens < sum {
            return Err(Error::InvalidArgument(format!(
                "total_tokens {total_tokens} is smaller than the summed counts {sum}"
            )));
        }
        self.total_tokens = total_tokens;
        Ok(())
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.id_of.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn frequency(&self, id: u32) -> f64 {
        self.counts[id as usize] as f64 / self.total_tokens as f64
    }

    /// Probability of keeping `word` under subsampling threshold `t`.
    pub fn keep_probability(&self, word: &str, t: f64) -> Result<f64> {
        let id = self
            .id(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_owned()))?;
        keep_probability(self.frequency(id), t)
    }

    /// Keep probabilities for every id.
    pub fn keep_table(&self, t: f64) -> Result<Vec<f64>> {
        (0..self.len() as u32)
            .map(|id| keep_probability(self.frequency(id), t))
            .collect()
    }

    /// Writes `word<TAB>count` lines in vocabulary order.
    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(w, "{word}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    /// Reads a vocabulary file. The corpus size is taken to be the sum of
    /// the counts until [`Vocabulary::set_total_tokens`] says otherwise.
    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                what: "vocabulary file",
                line: i + 1,
                msg: msg.to_owned(),
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected word<TAB>count"))?;
            if word.is_empty() {
                return Err(parse_err("empty word"));
            }
            let count: u64 = count.trim().parse().map_err(|_| parse_err("bad count"))?;
            if let Some((_, prev)) = entries.last() {
                if count > *prev {
                    return Err(parse_err("counts must be in descending order"));
                }
            }
            entries.push((word.to_owned(), count));
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput("vocabulary file"));
        }
        let total = entries.iter().map(|e| e.1).sum();
        Self::from_counts(entries, total)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }

    /// Maps a text stream to in-vocabulary ids, dropping OOV tokens.
    /// Also returns the number of tokens read, OOV included.
    pub fn encode<R: Read>(&self, reader: R) -> Result<(Vec<u32>, u64)> {
        let mut ids = Vec::new();
        let mut total = 0u64;
        for_each_token(reader, |token| {
            total += 1;
            if let Some(id) = self.id(token) {
                ids.push(id);
            }
        })?;
        Ok((ids, total))
    }
}

/// `sqrt(t / freq)` clamped to [0, 1].
pub fn keep_probability(freq: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "subsampling threshold must be positive, got {t}"
        )));
    }
    if !(freq > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "word frequency must be positive, got {freq}"
        )));
    }
    Ok((t / freq).sqrt().min(1.0))
}

/// Unigram^0.75 noise distribution for negative sampling.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    weights: Vec<f64>,
    sampler: AliasTable,
}

impl NoiseTable {
    pub fn new(vocab: &Vocabulary) -> Result<Self> {
        Self::from_counts(vocab.counts())
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyInput("noise table vocabulary"));
        }
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64).powf(NOISE_EXPONENT))
            .collect();
        let sampler = AliasTable::new(&weights)?;
        Ok(Self { weights, sampler })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Exact draw probabilities encoded by the sampler.
    pub fn probabilities(&self) -> Vec<f64> {
        self.sampler.probabilities()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.sampler.sample(rng) as u32
    }
}

/// One training example: `context` appeared within the window drawn for
/// `target`. `position` indexes the subsampled token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub position: usize,
    pub target: u32,
    pub context: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Draw `W_t` uniformly from `1..=max` per target position.
    Random(usize),
    /// Use the same radius everywhere.
    Fixed(usize),
}

/// Streams skip-gram pairs over a corpus of in-vocabulary ids.
///
/// Subsampling happens once, up front: dropped tokens neither act as
/// targets nor occupy window slots.
#[derive(Debug)]
pub struct PairStream {
    tokens: Vec<u32>,
    window: Window,
    rng: ChaCha8Rng,
    pos: usize,
    radius: usize,
    next: usize,
    end: usize,
}

impl PairStream {
    /// `keep` holds per-id keep probabilities; `None` disables subsampling.
    pub fn new(source: &[u32], keep: Option<&[f64]>, window: Window, seed: u64) -> Result<Self> {
        match window {
            Window::Random(0) | Window::Fixed(0) => {
                return Err(Error::InvalidArgument("window size must be at least 1".into()))
            }
            _ => {}
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = match keep {
            None => source.to_vec(),
            Some(keep) => {
                let mut kept = Vec::with_capacity(source.len());
                for &id in source {
                    let p = *keep.get(id as usize).ok_or(Error::IndexOutOfRange {
                        index: id as usize,
                        len: keep.len(),
                    })?;
                    if p >= 1.0 || rng.random::<f64>() < p {
                        kept.push(id);
                    }
                }
                kept
            }
        };
        let mut stream = Self {
            tokens,
            window,
            rng,
            pos: 0,
            radius: 0,
            next: 0,
            end: 0,
        };
        stream.start_target();
        Ok(stream)
    }

    /// Tokens that survived subsampling.
    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    fn start_target(&mut self) {
        if self.pos >= self.tokens.len() {
            return;
        }
        self.radius = match self.window {
            Window::Random(max) => self.rng.random_range(1..=max),
            Window::Fixed(w) => w,
        };
        self.next = self.pos.saturating_sub(self.radius);
        self.end = (self.pos + self.radius).min(self.tokens.len() - 1);
    }
}

impl Iterator for PairStream {
    type Item = Pair;

    fn next(&mut self) -> Option<Pair> {
        loop {
            if self.pos >= self.tokens.len() {
                return None;
            }
            if self.next > self.end {
                self.pos += 1;
                self.start_target();
                continue;
            }
            let j = self.next;
            self.next += 1;
            if j == self.pos {
                continue;
            }
            return Some(Pair {
                position: self.pos,
                target: self.tokens[self.pos],
                context: self.tokens[j],
            });
        }
    }
}
