//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts.
//!
//! Run with `cargo test -p npsg --test acceptance`.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use ndarray::Array1;
use npsg::augment::{duplicate, insert, maybe_perturb, swap, CharVocab};
use npsg::container;
use npsg::encoder::parameter_count;
use npsg::eval::{cosine, spearman, WordVectors};
use npsg::model::{BaselineModel, Model, NpsgModel};
use npsg::train::{init_npsg, train_baseline, train_npsg};
use npsg::{NoiseTable, ProjectionSpec, TrainConfig, Vocabulary};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "[{status}] criterion {n} {name}: {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

struct Trained {
    corpus: SyntheticCorpus,
    vocab: Vocabulary,
    model: NpsgModel,
    elapsed: Duration,
}

fn corpus() -> SyntheticCorpus {
    synthetic_corpus(200, 200_000, 11)
}

fn train_with_lambda(lambda: f64) -> Trained {
    let corpus = corpus();
    let (vocab, ids) = corpus.vocab_and_ids();
    let (cfg, spec) = small_run_config();
    let cfg = TrainConfig { lambda, ..cfg };
    let start = Instant::now();
    let (model, _) = train_npsg(&ids, &vocab, spec, &cfg, |_| {}).unwrap();
    Trained {
        corpus,
        vocab,
        model,
        elapsed: start.elapsed(),
    }
}

fn regularized() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| train_with_lambda(0.01))
}

fn unregularized() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| train_with_lambda(0.0))
}

fn baseline() -> &'static BaselineModel {
    static CELL: OnceLock<BaselineModel> = OnceLock::new();
    CELL.get_or_init(|| {
        let (vocab, ids) = corpus().vocab_and_ids();
        let (cfg, _) = small_run_config();
        train_baseline(&ids, &vocab, &cfg, |_| {}).unwrap().0
    })
}

#[test]
fn criterion_1_gradient_exactness() {
    let start = Instant::now();
    let mut worst = ("", 0.0f64);
    for seed in 0..5 {
        for (name, err) in end_to_end_errors(seed) {
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "gradient exactness",
        worst.1 <= 1e-4 && elapsed < Duration::from_secs(60),
        format!("max relative error {:.2e} in {} (limit 1e-4), {elapsed:.2?}", worst.1, worst.0),
    );
}

#[test]
fn criterion_2_regularizer_effect() {
    let (with, without) = (regularized(), unregularized());
    let words = with.vocab.words();
    let a = mean_abs_pairwise_cosine(&word_matrix(&with.model, words));
    let b = mean_abs_pairwise_cosine(&word_matrix(&without.model, words));
    let slowest = with.elapsed.max(without.elapsed);
    report(
        2,
        "regularizer effect",
        a < b && slowest < Duration::from_secs(300),
        format!("mean |cos| {a:.4} with lambda 0.01 vs {b:.4} without, slowest run {slowest:.2?}"),
    );
}

#[test]
fn criterion_3_semantic_clustering() {
    let t = regularized();
    let words = t.vocab.words();
    let labels: Vec<usize> = words.iter().map(|w| t.corpus.cluster[w]).collect();
    let (intra, inter, top1) = cluster_stats(&word_matrix(&t.model, words), &labels);
    let (_, _, oracle_top1) = cluster_stats(&word_matrix(baseline(), words), &labels);
    report(
        3,
        "semantic clustering",
        intra > inter && top1 >= 0.8 && oracle_top1 >= 0.8 && t.elapsed < Duration::from_secs(300),
        format!(
            "intra {intra:.4} vs inter {inter:.4}, top-1 in-cluster {top1:.3} (lookup baseline {oracle_top1:.3}), trained in {:.2?}",
            t.elapsed
        ),
    );
}

#[test]
fn criterion_4_misspelling_robustness() {
    let t = regularized();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let chars = CharVocab::default();
    let words = t.vocab.words();
    let sampled: Vec<&String> = words.choose_multiple(&mut rng, 100).collect();
    let mut wins = 0;
    for w in &sampled {
        let edited = loop {
            let e = maybe_perturb(w, 1.0, &chars, &mut rng);
            if e != **w {
                break e;
            }
        };
        let v = t.model.vector(w).unwrap().unwrap();
        let e = t.model.vector(&edited).unwrap().unwrap();
        let others: Vec<&String> = words.iter().filter(|o| o != w).collect();
        let mut sims: Vec<f64> = others
            .choose_multiple(&mut rng, 50)
            .map(|o| cosine(v.view(), t.model.vector(o).unwrap().unwrap().view()))
            .collect();
        sims.sort_by(f64::total_cmp);
        let median = (sims[24] + sims[25]) / 2.0;
        wins += usize::from(cosine(v.view(), e.view()) > median);
    }
    let elapsed = start.elapsed();
    report(
        4,
        "misspelling robustness",
        wins >= 90 && elapsed < Duration::from_secs(60),
        format!("{wins}/100 edits closer than the median random word (need 90), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_5_projection_locality() {
    let spec = ProjectionSpec::default();
    let chars = CharVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let words: Vec<String> = (0..1000).map(|_| random_word(&mut rng, 3, 12)).collect();
    let (mut near, mut far) = (0.0, 0.0);
    for w in &words {
        let p = spec.project(w).unwrap();
        let edited = maybe_perturb(w, 1.0, &chars, &mut rng);
        near += p.hamming(&spec.project(&edited).unwrap()) as f64;
        far += p.hamming(&spec.project(words.choose(&mut rng).unwrap()).unwrap()) as f64;
    }
    let (near, far) = (near / 1000.0, far / 1000.0);
    report(
        5,
        "projection locality",
        near < far,
        format!("mean Hamming {near:.1} to a 1-edit variant vs {far:.1} between random pairs"),
    );
}

/// Quadratic tie-averaged ranks: 1 + #smaller + (#equal - 1) / 2.
fn reference_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn reference_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn criterion_6_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_rho = 0.0f64;
    let mut cases = 0;
    while cases < 100 {
        let n = rng.random_range(3..60);
        let levels = rng.random_range(2..8);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        let distinct = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<HashSet<_>>().len();
        if distinct(&xs) < 2 || distinct(&ys) < 2 {
            continue;
        }
        let want = reference_pearson(&reference_ranks(&xs), &reference_ranks(&ys));
        worst_rho = worst_rho.max((spearman(&xs, &ys).unwrap() - want).abs());
        cases += 1;
    }

    let mut worst_noise = 0.0f64;
    let draws = 1_000_000;
    for counts in [vec![8u64, 1], vec![100, 40, 7, 3, 1, 1, 250, 12]] {
        let table = NoiseTable::from_counts(&counts).unwrap();
        let mut hits = vec![0usize; counts.len()];
        for _ in 0..draws {
            hits[table.sample(&mut rng) as usize] += 1;
        }
        let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
        for (c, h) in counts.iter().zip(&hits) {
            let want = (*c as f64).powf(0.75) / z;
            worst_noise = worst_noise.max((*h as f64 / draws as f64 - want).abs());
        }
    }
    report(
        6,
        "oracle equivalence",
        worst_rho <= 1e-12 && worst_noise <= 0.005,
        format!("spearman max deviation {worst_rho:.1e} over 100 tied inputs, noise frequency max deviation {worst_noise:.5}"),
    );
}

#[test]
fn criterion_7_memory_footprint() {
    let cfg = TrainConfig::default();
    let mut counts = Vec::new();
    for size in [100usize, 10_000, 100_000] {
        let entries: Vec<(String, u64)> = (0..size).map(|i| (format!("w{i}"), 1)).collect();
        let vocab = Vocabulary::from_counts(entries, size as u64).unwrap();
        let model = init_npsg(&vocab, ProjectionSpec::default(), &cfg).unwrap();
        counts.push(model.representer.encoder.parameter_count());
    }
    let default_total = parameter_count(&[1120, 2048, 100]);
    let by_hand = 1120 * 2048 + 2048 + 2048 * 100 + 100 + 4 * 100;
    report(
        7,
        "memory footprint",
        counts.iter().all(|&c| c == counts[0]) && counts[0] == default_total && default_total == by_hand,
        format!("encoder parameters for |V| = 1e2, 1e4, 1e5: {counts:?}, default closed form {default_total}"),
    );
}

fn bits(v: &Array1<f64>) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn criterion_8_determinism_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.txt");
    let vocab_path = dir.path().join("vocab.tsv");
    std::fs::write(&corpus_path, synthetic_corpus(60, 20_000, 8).text).unwrap();
    let bin = env!("CARGO_BIN_EXE_npsg");
    let status = Command::new(bin)
        .args(["build-vocab"])
        .arg(&corpus_path)
        .arg(&vocab_path)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let train = |name: &str| {
        let out = dir.path().join(name);
        let o = Command::new(bin)
            .arg("train")
            .arg(&corpus_path)
            .arg(&vocab_path)
            .arg(&out)
            .args(["--deterministic", "--seed", "3", "--epochs", "2"])
            .args(["--set", "mlp_sizes=64,16", "--set", "embedding_dim=16", "--set", "batch_size=64"])
            .args(["--set", "num_projections=8", "--set", "negatives_k=4", "--set", "subsample_t=1e-3"])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let (first, second) = (train("a.npsg"), train("b.npsg"));
    let identical_files = first == second;

    let t = regularized();
    let restored = match container::decode(&container::encode(&Model::Npsg(t.model.clone()), false).unwrap()).unwrap() {
        Model::Npsg(m) => m,
        Model::Baseline(_) => panic!("wrong kind"),
    };
    let mut probes: Vec<String> = t.vocab.words()[..50].to_vec();
    probes.extend(["wwoamn", "samnple", "x", "unseenword"].map(String::from));
    let bit_exact = probes.iter().all(|w| {
        bits(&t.model.representer.represent(w).unwrap()) == bits(&restored.representer.represent(w).unwrap())
    });
    report(
        8,
        "determinism and persistence",
        identical_files && bit_exact,
        format!(
            "deterministic CLI runs byte-identical: {identical_files} ({} bytes), represent() bit-exact after reload on {} words: {bit_exact}",
            first.len(),
            probes.len()
        ),
    );
}

fn sorted_chars(s: &str) -> Vec<char> {
    let mut c: Vec<char> = s.chars().collect();
    c.sort_unstable();
    c
}

fn ends(s: &str) -> (Option<char>, Option<char>) {
    (s.chars().next(), s.chars().last())
}

fn is_subsequence(short: &str, long: &str) -> bool {
    let mut it = long.chars();
    short.chars().all(|c| it.any(|d| d == c))
}

fn reachable(target: &str, mut f: impl FnMut(&mut ChaCha8Rng) -> String) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    (0..10_000).any(|_| f(&mut rng) == target)
}

#[test]
fn criterion_9_perturbation_contracts() {
    let chars = CharVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = Vec::new();
    for trial in 0..10_000 {
        let w = random_word(&mut rng, 1, 12);
        let len = w.chars().count();
        let n = rng.random_range(0..5);

        let ins = insert(&w, n, &chars, &mut rng);
        let want_len = if len >= 2 { len + n } else { len };
        if ins.chars().count() != want_len || ends(&ins) != ends(&w) || !is_subsequence(&w, &ins) || (n == 0 && ins != w) {
            violations.push(format!("insert #{trial}: {w} -> {ins}"));
        }

        let sw = swap(&w, n, &mut rng);
        if sorted_chars(&sw) != sorted_chars(&w) || ends(&sw) != ends(&w) || (n == 0 && sw != w) {
            violations.push(format!("swap #{trial}: {w} -> {sw}"));
        }

        let dup = duplicate(&w, n, &mut rng).unwrap();
        if dup.chars().count() != len + n || !is_subsequence(&w, &dup) || (n == 0 && dup != w) {
            violations.push(format!("duplicate #{trial}: {w} -> {dup}"));
        }
    }
    let examples = [
        ("samnple", reachable("samnple", |r| insert("sample", 1, &chars, r))),
        ("sapmle", reachable("sapmle", |r| swap("sample", 1, r))),
        ("saample", reachable("saample", |r| duplicate("sample", 1, r).unwrap())),
    ];
    let all_reachable = examples.iter().all(|e| e.1);
    report(
        9,
        "perturbation contracts",
        violations.is_empty() && all_reachable,
        format!(
            "{} violations over 10^4 trials per operation (first: {:?}), examples reachable: {:?}",
            violations.len(),
            violations.first(),
            examples
        ),
    );
}
