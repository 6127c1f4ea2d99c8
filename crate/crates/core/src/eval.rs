//! Word-similarity benchmarking and nearest-neighbor retrieval.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use ndarray::{Array1, ArrayView1};

use crate::encoder::Representer;
use crate::error::{Error, Result};

const COSINE_EPSILON: f64 = 1e-12;

/// Anything that maps words to vectors. `Ok(None)` means the word is out
/// of vocabulary.
pub trait WordVectors {
    fn dim(&self) -> usize;

    fn vector(&self, word: &str) -> Result<Option<Array1<f64>>>;

    fn vectors(&self, words: &[&str]) -> Result<Vec<Option<Array1<f64>>>> {
        words.iter().map(|w| self.vector(w)).collect()
    }
}

impl WordVectors for Representer {
    fn dim(&self) -> usize {
        self.output_dim()
    }

    fn vector(&self, word: &str) -> Result<Option<Array1<f64>>> {
        self.represent(word).map(Some)
    }

    fn vectors(&self, words: &[&str]) -> Result<Vec<Option<Array1<f64>>>> {
        let mut out = Vec::with_capacity(words.len());
        for chunk in words.chunks(1024) {
            let m = self.represent_batch(chunk)?;
            out.extend(m.rows().into_iter().map(|r| Some(r.to_owned())));
        }
        Ok(out)
    }
}

/// Cosine similarity plus a flag set when either vector has (near) zero
/// norm and the value is only epsilon-guarded.
pub fn cosine_checked(u: ArrayView1<f64>, v: ArrayView1<f64>) -> (f64, bool) {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    let denom = nu * nv;
    let degenerate = denom < COSINE_EPSILON;
    let c = u.dot(&v) / denom.max(COSINE_EPSILON);
    (c.clamp(-1.0, 1.0), degenerate)
}

pub fn cosine(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    cosine_checked(u, v).0
}

/// Fractional ranks (1-based); tied values share the average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input has zero rank variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "spearman inputs have lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPair {
    pub word1: String,
    pub word2: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDataset {
    pub name: String,
    pub pairs: Vec<SimilarityPair>,
}

impl SimilarityDataset {
    /// Parses `word1<TAB>word2<TAB>score` lines; `#` lines and blank lines
    /// are skipped.
    pub fn read_from<R: Read>(name: impl Into<String>, reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                what: "similarity dataset",
                line: i + 1,
                msg: msg.to_owned(),
            };
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(err("expected word1<TAB>word2<TAB>score"));
            }
            let score: f64 = fields[2].trim().parse().map_err(|_| err("bad score"))?;
            if !score.is_finite() {
                return Err(err("score is not finite"));
            }
            let (w1, w2) = (fields[0].trim(), fields[1].trim());
            if w1.is_empty() || w2.is_empty() {
                return Err(err("empty word"));
            }
            pairs.push(SimilarityPair {
                word1: w1.to_owned(),
                word2: w2.to_owned(),
                score,
            });
        }
        if pairs.is_empty() {
            return Err(Error::EmptyInput("similarity dataset"));
        }
        Ok(Self {
            name: name.into(),
            pairs,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::read_from(name, File::open(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub dataset: String,
    pub rho: f64,
    /// Fraction of pairs for which both words had vectors.
    pub coverage: f64,
    pub n_pairs: usize,
    pub n_scored: usize,
    /// Pairs whose cosine involved a zero vector.
    pub n_degenerate: usize,
}

impl fmt::Display for SimilarityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset = {}", self.dataset)?;
        writeln!(f, "rho = {:.6}", self.rho)?;
        writeln!(f, "coverage = {:.6}", self.coverage)?;
        writeln!(f, "n_pairs = {}", self.n_pairs)?;
        writeln!(f, "n_scored = {}", self.n_scored)?;
        writeln!(f, "n_degenerate = {}", self.n_degenerate)
    }
}

/// Spearman correlation between model cosines and human scores over the
/// pairs the model covers.
pub fn eval_similarity<M: WordVectors + ?Sized>(model: &M, dataset: &SimilarityDataset) -> Result<SimilarityReport> {
    let mut words: Vec<&str> = Vec::with_capacity(dataset.pairs.len() * 2);
    for p in &dataset.pairs {
        words.push(&p.word1);
        words.push(&p.word2);
    }
    let vectors = model.vectors(&words)?;

    let mut model_scores = Vec::new();
    let mut human = Vec::new();
    let mut degenerate = 0;
    for (p, vs) in dataset.pairs.iter().zip(vectors.chunks(2)) {
        if let (Some(a), Some(b)) = (&vs[0], &vs[1]) {
            let (c, flagged) = cosine_checked(a.view(), b.view());
            degenerate += usize::from(flagged);
            model_scores.push(c);
            human.push(p.score);
        }
    }
    if model_scores.is_empty() {
        return Err(Error::EmptyInput("no dataset pair is covered by the model"));
    }
    let rho = spearman(&model_scores, &human)?;
    Ok(SimilarityReport {
        dataset: dataset.name.clone(),
        rho,
        coverage: model_scores.len() as f64 / dataset.pairs.len() as f64,
        n_pairs: dataset.pairs.len(),
        n_scored: model_scores.len(),
        n_degenerate: degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborResult {
    pub query: String,
    pub neighbors: Vec<(String, f64)>,
}

impl fmt::Display for NeighborResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (word, score) in &self.neighbors {
            writeln!(f, "{word}\t{score:.6}")?;
        }
        Ok(())
    }
}

/// The `topk` candidates most cosine-similar to `query`, excluding the
/// query itself. Candidates the model cannot embed are skipped.
pub fn nearest_neighbors<M: WordVectors + ?Sized, S: AsRef<str>>(
    model: &M,
    query: &str,
    candidates: &[S],
    topk: usize,
) -> Result<NeighborResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("neighbor candidates"));
    }
    if topk == 0 {
        return Err(Error::InvalidArgument("topk must be at least 1".into()));
    }
    let q = model
        .vector(query)?
        .ok_or_else(|| Error::OutOfVocabulary(query.to_owned()))?;
    let words: Vec<&str> = candidates
        .iter()
        .map(AsRef::as_ref)
        .filter(|w| *w != query)
        .collect();
    let vectors = model.vectors(&words)?;
    let mut scored: Vec<(String, f64)> = words
        .iter()
        .zip(vectors)
        .filter_map(|(w, v)| v.map(|v| ((*w).to_owned(), cosine(q.view(), v.view()))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(topk);
    Ok(NeighborResult {
        query: query.to_owned(),
        neighbors: scored,
    })
}
