//! Command-line entry points.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{CharVocab, PerturbKind, PerturbOp};
use crate::config::{parse_config, set_projection_key, TrainConfig};
use crate::container;
use crate::corpus::{Vocabulary, DEFAULT_MAX_VOCAB};
use crate::eval::{eval_similarity, nearest_neighbors, SimilarityDataset, WordVectors};
use crate::model::Model;
use crate::projector::ProjectionSpec;
use crate::train::{train_baseline, train_npsg, Progress};

#[derive(Debug, Parser)]
#[command(name = "npsg", version, about = "Projection skip-gram word representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count a whitespace-tokenized corpus into a `word<TAB>count` file.
    BuildVocab {
        corpus: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
        max_vocab: usize,
    },
    /// Train a projection model (or the lookup baseline) and write it.
    Train(TrainArgs),
    /// Spearman correlation on a `word1<TAB>word2<TAB>score` dataset.
    EvalSim {
        model: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        lowercase: bool,
    },
    /// Nearest neighbors of a word among candidate words.
    Nn {
        model: PathBuf,
        query: String,
        /// One word per line, or a vocabulary file. Defaults to the
        /// vocabulary stored in the model.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        topk: usize,
        #[arg(long)]
        lowercase: bool,
    },
    /// Print `word<TAB>f1<TAB>...<TAB>fD` for every input line.
    Embed {
        model: PathBuf,
        /// Words file, one per line; stdin when absent.
        words: Option<PathBuf>,
        #[arg(long)]
        lowercase: bool,
    },
    /// Apply one perturbation operation to a word.
    Perturb {
        word: String,
        #[arg(long, default_value = "insert")]
        op: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub out: PathBuf,
    /// `key = value` file with training and projection settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train the lookup-table skip-gram baseline instead.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for gradient computation (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Single-threaded, reproducible run.
    #[arg(long)]
    pub deterministic: bool,
    /// Also store the vocabulary and context table in a projection model.
    #[arg(long)]
    pub include_context: bool,
}

/// Runs a parsed command. `Ok(false)` means the command finished but some
/// input lines failed (reported on stderr).
pub fn run(cli: Cli) -> anyhow::Result<bool> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let ok = match cli.command {
        Command::BuildVocab { corpus, out: path, max_vocab } => {
            let file = File::open(&corpus).with_context(|| format!("opening corpus {}", corpus.display()))?;
            let vocab = Vocabulary::from_reader(file, max_vocab)?;
            vocab
                .save(&path)
                .with_context(|| format!("writing vocabulary {}", path.display()))?;
            writeln!(out, "vocab_size = {}", vocab.len())?;
            writeln!(out, "total_tokens = {}", vocab.total_tokens())?;
            true
        }
        Command::Train(args) => {
            cmd_train(&args, &mut out)?;
            true
        }
        Command::EvalSim { model, dataset, lowercase } => {
            let model = load_model(&model)?;
            let mut ds = SimilarityDataset::load(&dataset)
                .with_context(|| format!("reading dataset {}", dataset.display()))?;
            if lowercase {
                for p in &mut ds.pairs {
                    p.word1 = p.word1.to_lowercase();
                    p.word2 = p.word2.to_lowercase();
                }
            }
            let report = eval_similarity(&model, &ds)?;
            write!(out, "{report}")?;
            true
        }
        Command::Nn {
            model,
            query,
            candidates,
            topk,
            lowercase,
        } => {
            let model = load_model(&model)?;
            let query = if lowercase { query.to_lowercase() } else { query };
            let words = match candidates {
                Some(path) => read_word_list(&path)?,
                None => model
                    .vocabulary()
                    .ok_or_else(|| anyhow!("model has no stored vocabulary; pass --candidates"))?
                    .words()
                    .to_vec(),
            };
            let result = nearest_neighbors(&model, &query, &words, topk)?;
            write!(out, "{result}")?;
            true
        }
        Command::Embed { model, words, lowercase } => {
            let model = load_model(&model)?;
            let reader: Box<dyn Read> = match &words {
                Some(p) => Box::new(File::open(p).with_context(|| format!("opening {}", p.display()))?),
                None => Box::new(io::stdin()),
            };
            cmd_embed(&model, reader, lowercase, &mut out, &mut io::stderr())?
        }
        Command::Perturb { word, op, n, seed } => {
            let kind: PerturbKind = op.parse()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let result = PerturbOp { kind, n }.apply(&word, &CharVocab::default(), &mut rng)?;
            writeln!(out, "{result}")?;
            true
        }
    };
    out.flush()?;
    Ok(ok)
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    container::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Accepts plain word lists and `word<TAB>count` vocabulary files.
fn read_word_list(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split('\t').next())
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Builds the effective configuration: defaults, then the config file,
/// then command-line flags.
pub fn resolve_config(args: &TrainArgs) -> anyhow::Result<(TrainConfig, ProjectionSpec)> {
    let (mut cfg, mut spec) = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_config(&text)?
        }
        None => (TrainConfig::default(), ProjectionSpec::default()),
    };
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("override {item:?} is not KEY=VALUE"))?;
        let (k, v) = (k.trim(), v.trim());
        if !cfg.set(k, v)? && !set_projection_key(&mut spec, k, v)? {
            bail!("unknown setting {k:?}");
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    spec.validate()?;
    Ok((cfg, spec))
}

fn cmd_train(args: &TrainArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let (cfg, spec) = resolve_config(args)?;
    let threads = if args.deterministic { 1 } else { args.threads };
    // Fails harmlessly if a pool already exists (e.g. in-process callers).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let mut vocab = Vocabulary::load(&args.vocab).with_context(|| format!("reading vocabulary {}", args.vocab.display()))?;
    let corpus = File::open(&args.corpus).with_context(|| format!("opening corpus {}", args.corpus.display()))?;
    let (ids, total) = vocab.encode(corpus)?;
    vocab
        .set_total_tokens(total)
        .context("vocabulary does not match the corpus")?;

    let log = |p: &Progress| {
        eprintln!(
            "epoch {} step {} loss {:.6} examples/sec {:.0}",
            p.epoch, p.step, p.mean_loss, p.examples_per_sec
        );
    };
    let (model, report) = if args.baseline {
        let (m, r) = train_baseline(&ids, &vocab, &cfg, log)?;
        (Model::Baseline(m), r)
    } else {
        let (m, r) = train_npsg(&ids, &vocab, spec, &cfg, log)?;
        (Model::Npsg(m), r)
    };
    container::save(&model, &args.out, args.include_context)
        .with_context(|| format!("writing model {}", args.out.display()))?;
    write!(out, "{report}")?;
    Ok(())
}

/// Writes one vector line per input word. Returns `false` if any line
/// failed; failures are reported on `err` and skipped.
pub fn cmd_embed<R: Read>(model: &Model, input: R, lowercase: bool, out: &mut impl Write, err: &mut impl Write) -> anyhow::Result<bool> {
    let mut ok = true;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let word = line.trim();
        let word = if lowercase { word.to_lowercase() } else { word.to_owned() };
        if word.is_empty() {
            writeln!(err, "error: line {}: empty word", i + 1)?;
            ok = false;
            continue;
        }
        match model.vector(&word) {
            Ok(Some(v)) => {
                write!(out, "{word}")?;
                for x in v.iter() {
                    write!(out, "\t{x:.6}")?;
                }
                writeln!(out)?;
            }
            Ok(None) => {
                writeln!(err, "error: line {}: out-of-vocabulary word {word:?}", i + 1)?;
                ok = false;
            }
            Err(e) => {
                writeln!(err, "error: line {}: {e}", i + 1)?;
                ok = false;
            }
        }
    }
    Ok(ok)
}
