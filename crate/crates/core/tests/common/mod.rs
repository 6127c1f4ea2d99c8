#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use ndarray::Array2;
use npsg::encoder::{ContextTable, EncoderParams};
use npsg::eval::{cosine, WordVectors};
use npsg::objective::{scatter_rows, total_loss, Batch, LossWeights};
use npsg::{ProjectionSpec, TrainConfig, Vocabulary};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two disjoint 100-word clusters of random letter strings. Sentences of
/// ten words are drawn from a single cluster, so context statistics
/// separate the clusters while spelling carries no cluster signal.
pub struct SyntheticCorpus {
    pub text: String,
    pub words: Vec<String>,
    pub cluster: HashMap<String, usize>,
}

pub fn random_word<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

pub fn synthetic_corpus(vocab: usize, tokens: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(vocab);
    while words.len() < vocab {
        let w = random_word(&mut rng, 5, 8);
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    let cluster: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i % 2)).collect();
    let groups: [Vec<&String>; 2] = [
        words.iter().step_by(2).collect(),
        words.iter().skip(1).step_by(2).collect(),
    ];
    let mut text = String::with_capacity(tokens * 8);
    let mut n = 0;
    while n < tokens {
        let g = &groups[rng.random_range(0..2)];
        for _ in 0..10 {
            text.push_str(g.choose(&mut rng).unwrap());
            text.push(' ');
            n += 1;
        }
        text.push('\n');
    }
    SyntheticCorpus { text, words, cluster }
}

impl SyntheticCorpus {
    pub fn vocab_and_ids(&self) -> (Vocabulary, Vec<u32>) {
        let vocab = Vocabulary::from_reader(self.text.as_bytes(), 100_000).unwrap();
        let (ids, _) = vocab.encode(self.text.as_bytes()).unwrap();
        (vocab, ids)
    }
}

/// Desk-scale settings used by the synthetic-corpus runs.
pub fn small_run_config() -> (TrainConfig, ProjectionSpec) {
    let cfg = TrainConfig {
        negatives_k: 5,
        batch_size: 64,
        epochs: 5,
        window_max: 3,
        subsample_t: 5e-4,
        dropout_p: 0.1,
        mlp_sizes: vec![256, 32],
        embedding_dim: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let spec = ProjectionSpec {
        num_projections: 16,
        bits_per_projection: 8,
        ..ProjectionSpec::default()
    };
    (cfg, spec)
}

/// Mean |cosine| over distinct row pairs.
pub fn mean_abs_pairwise_cosine(m: &Array2<f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..m.nrows() {
        for j in i + 1..m.nrows() {
            sum += cosine(m.row(i), m.row(j)).abs();
            n += 1;
        }
    }
    sum / n as f64
}

/// (mean intra-cluster cosine, mean inter-cluster cosine, top-1 in-cluster rate).
pub fn cluster_stats(m: &Array2<f64>, labels: &[usize]) -> (f64, f64, f64) {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    let mut hits = 0usize;
    for i in 0..m.nrows() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for j in 0..m.nrows() {
            if i == j {
                continue;
            }
            let c = cosine(m.row(i), m.row(j));
            if c > best.0 {
                best = (c, j);
            }
            if j > i {
                if labels[i] == labels[j] {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        hits += usize::from(labels[best.1] == labels[i]);
    }
    (intra / ni as f64, inter / nx as f64, hits as f64 / m.nrows() as f64)
}

/// Central finite differences of `loss` with respect to every entry of
/// the slice selected by `slot`.
pub fn finite_difference<S: Clone>(state: &S, slot: fn(&mut S) -> &mut [f64], loss: &dyn Fn(&S) -> f64, h: f64) -> Vec<f64> {
    let mut s = state.clone();
    let n = slot(&mut s).len();
    (0..n)
        .map(|i| {
            let orig = slot(&mut s)[i];
            slot(&mut s)[i] = orig + h;
            let plus = loss(&s);
            slot(&mut s)[i] = orig - h;
            let minus = loss(&s);
            slot(&mut s)[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, 1e-6): relative error of one parameter group,
/// with a floor so groups whose true gradient is zero compare absolutely.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-6)
}

#[derive(Clone)]
struct FullState {
    enc: EncoderParams,
    table: Array2<f64>,
}

/// The end-to-end check: encoder + negative sampling + regularizer +
/// weight decay, with dropout masks and negatives frozen.
pub fn end_to_end_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bits, vocab, mb, k) = (16, 6, 3, 2);
    let enc = EncoderParams::init(&[bits, 8, 4], 0.4, &mut rng).unwrap();
    let table = ContextTable::init(vocab, 4, &mut rng);
    let inputs = Array2::from_shape_simple_fn((mb, bits), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let batch = Batch {
        masks: enc.sample_masks(mb, &mut rng),
        contexts: (0..mb).map(|_| rng.random_range(0..vocab as u32)).collect(),
        negatives: (0..mb * k).map(|_| rng.random_range(0..vocab as u32)).collect(),
        inputs,
    };
    let weights = LossWeights { negatives_k: k, lambda: 0.01, weight_decay: 0.0005 };
    let out = total_loss(&enc, &table, &batch, weights).unwrap();
    let mut table_grad = Array2::zeros(table.rows.dim());
    scatter_rows(&out.grad_rows, &mut table_grad);

    let state = FullState { enc, table: table.rows };
    let loss = |s: &FullState| {
        total_loss(&s.enc, &ContextTable { rows: s.table.clone() }, &batch, weights)
            .unwrap()
            .total
    };
    let g = &out.encoder;
    let checks: Vec<(&'static str, fn(&mut FullState) -> &mut [f64], Vec<f64>)> = vec![
        ("mlp.0.weight", |s| s.enc.layers[0].weight.as_slice_mut().unwrap(), g.layers[0].weight.iter().copied().collect()),
        ("mlp.0.bias", |s| s.enc.layers[0].bias.as_slice_mut().unwrap(), g.layers[0].bias.to_vec()),
        ("mlp.1.weight", |s| s.enc.layers[1].weight.as_slice_mut().unwrap(), g.layers[1].weight.iter().copied().collect()),
        ("mlp.1.bias", |s| s.enc.layers[1].bias.as_slice_mut().unwrap(), g.layers[1].bias.to_vec()),
        ("bn.gamma", |s| s.enc.bn_gamma.as_slice_mut().unwrap(), g.bn_gamma.to_vec()),
        ("bn.beta", |s| s.enc.bn_beta.as_slice_mut().unwrap(), g.bn_beta.to_vec()),
        ("context", |s| s.table.as_slice_mut().unwrap(), table_grad.iter().copied().collect()),
    ];
    checks
        .into_iter()
        .map(|(name, slot, analytic)| (name, relative_error(&analytic, &finite_difference(&state, slot, &loss, 1e-4))))
        .collect()
}

/// Stacks the vectors of `words` (all must be representable) into rows.
pub fn word_matrix<M: WordVectors + ?Sized, S: AsRef<str>>(model: &M, words: &[S]) -> Array2<f64> {
    let refs: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
    let vecs = model.vectors(&refs).unwrap();
    let mut out = Array2::zeros((vecs.len(), model.dim()));
    for (mut row, v) in out.rows_mut().into_iter().zip(vecs) {
        row.assign(&v.expect("word has no vector"));
    }
    out
}
