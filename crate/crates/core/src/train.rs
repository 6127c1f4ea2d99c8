//! Training loops for the projection model and the lookup-table baseline.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{maybe_perturb_with_kind, CharVocab};
use crate::config::TrainConfig;
use crate::corpus::{NoiseTable, Pair, PairStream, Vocabulary, Window};
use crate::encoder::{ContextTable, EncoderGrads, EncoderParams, Representer};
use crate::error::{Error, Result};
use crate::hash::combine;
use crate::model::{BaselineModel, NpsgModel, TrainingState};
use crate::objective::{
    draw_negatives, encoder_groups, group, neg_loss, scatter_rows, total_loss, AdamState, Batch, LossWeights,
};
use crate::projector::{BinaryProjection, ProjectionSpec};

/// Progress callback payload, emitted at the end of every epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    /// 1-based.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub mean_loss: f64,
    pub examples_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model_kind: &'static str,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub examples: usize,
    pub parameters: usize,
    pub vocab_size: usize,
    pub elapsed_secs: f64,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model_kind = {}", self.model_kind)?;
        writeln!(f, "epochs = {}", self.epoch_losses.len())?;
        writeln!(f, "steps = {}", self.steps)?;
        writeln!(f, "examples = {}", self.examples)?;
        writeln!(f, "parameters = {}", self.parameters)?;
        writeln!(f, "vocab_size = {}", self.vocab_size)?;
        let losses: Vec<String> = self.epoch_losses.iter().map(|l| format!("{l:.6}")).collect();
        writeln!(f, "epoch_losses = {}", losses.join(","))?;
        if let Some(last) = self.epoch_losses.last() {
            writeln!(f, "final_loss = {last:.6}")?;
        }
        writeln!(f, "elapsed_secs = {:.3}", self.elapsed_secs)
    }
}

// Independent RNG streams derived from the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_PAIRS: u64 = 1000;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(combine(seed, stream))
}

fn keep_table(vocab: &Vocabulary, config: &TrainConfig) -> Result<Option<Vec<f64>>> {
    if config.subsample_t.is_infinite() {
        Ok(None)
    } else {
        vocab.keep_table(config.subsample_t).map(Some)
    }
}

fn check_inputs(tokens: &[u32], vocab: &Vocabulary, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyInput("vocabulary"));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= vocab.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad as usize,
            len: vocab.len(),
        });
    }
    Ok(())
}

/// Freshly initialized projection model, exactly as training starts from.
pub fn init_npsg(vocab: &Vocabulary, spec: ProjectionSpec, config: &TrainConfig) -> Result<NpsgModel> {
    config.validate()?;
    spec.validate()?;
    let mut rng = rng_for(config.seed, STREAM_INIT);
    let mut sizes = vec![spec.total_bits()];
    sizes.extend(&config.mlp_sizes);
    let encoder = EncoderParams::init(&sizes, config.dropout_p, &mut rng)?;
    let context = ContextTable::init(vocab.len(), encoder.output_dim(), &mut rng);
    let mut model = NpsgModel {
        representer: Representer::new(spec, encoder)?,
        config: config.clone(),
        training_state: Some(TrainingState {
            vocab: vocab.clone(),
            context,
        }),
    };
    model.round_to_f32();
    Ok(model)
}

/// Groups consecutive pairs into minibatches of `batch_size`, keeping the
/// final partial batch if it has at least two examples.
struct Batcher {
    size: usize,
    pairs: Vec<Pair>,
}

impl Batcher {
    fn push(&mut self, pair: Pair) -> Option<Vec<Pair>> {
        self.pairs.push(pair);
        (self.pairs.len() == self.size).then(|| std::mem::replace(&mut self.pairs, Vec::with_capacity(self.size)))
    }

    fn finish(&mut self) -> Option<Vec<Pair>> {
        let rest = std::mem::take(&mut self.pairs);
        (rest.len() >= 2).then_some(rest)
    }
}

struct EpochStats {
    loss_sum: f64,
    batches: usize,
    examples: usize,
}

/// Trains the projection model on `tokens` (in-vocabulary ids).
///
/// Deterministic for a fixed `config.seed`, independent of the rayon
/// thread count.
pub fn train_npsg(
    tokens: &[u32],
    vocab: &Vocabulary,
    spec: ProjectionSpec,
    config: &TrainConfig,
    mut progress: impl FnMut(&Progress),
) -> Result<(NpsgModel, TrainReport)> {
    check_inputs(tokens, vocab, config)?;
    let start = Instant::now();
    let mut model = init_npsg(vocab, spec, config)?;
    let noise = NoiseTable::new(vocab)?;
    let keep = keep_table(vocab, config)?;
    let chars = CharVocab::default();
    let weights = LossWeights {
        negatives_k: config.negatives_k,
        lambda: config.lambda,
        weight_decay: config.weight_decay,
    };

    let spec = model.representer.spec.clone();
    let cached: Vec<BinaryProjection> = vocab
        .words()
        .iter()
        .map(|w| spec.project(w))
        .collect::<Result<_>>()?;

    let NpsgModel {
        representer,
        training_state,
        ..
    } = &mut model;
    let encoder = &mut representer.encoder;
    let table = &mut training_state.as_mut().expect("fresh model has training state").context;

    let mut table_grad = Array2::<f64>::zeros(table.rows.dim());
    let mut adam = {
        let mut g = EncoderGrads::zeros_like(encoder);
        let mut groups = encoder_groups(encoder, &mut g);
        groups.push(group("context".into(), table.rows.as_slice_mut(), table_grad.as_slice_mut()));
        AdamState::for_groups(&groups)
    };

    let mut rng = rng_for(config.seed, STREAM_BATCH);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0usize;
    let mut examples = 0usize;
    let width = spec.total_bits();

    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        let stream = PairStream::new(
            tokens,
            keep.as_deref(),
            Window::Random(config.window_max),
            combine(config.seed, STREAM_PAIRS + epoch as u64),
        )?;
        let mut stats = EpochStats {
            loss_sum: 0.0,
            batches: 0,
            examples: 0,
        };
        let mut batcher = Batcher {
            size: config.batch_size,
            pairs: Vec::with_capacity(config.batch_size),
        };
        // Projection of the current target occurrence, perturbed or not.
        let mut current: Option<(usize, BinaryProjection)> = None;
        let mut inputs: Vec<f64> = Vec::with_capacity(config.batch_size * width);

        let mut run_batch = |pairs: Vec<Pair>, inputs: &mut Vec<f64>, rng: &mut ChaCha8Rng| -> Result<()> {
            let mb = pairs.len();
            let batch = Batch {
                inputs: Array2::from_shape_vec((mb, width), std::mem::take(inputs)).expect("batch shape"),
                contexts: pairs.iter().map(|p| p.context).collect(),
                negatives: draw_negatives(&noise, config.negatives_k, mb, rng),
                masks: encoder.sample_masks(mb, rng),
            };
            let out = total_loss(encoder, table, &batch, weights)?;
            if !out.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {} step {} (neg {}, reg {}, decay {})",
                    epoch + 1,
                    steps + 1,
                    out.neg,
                    out.reg,
                    out.decay
                )));
            }
            encoder.update_running_stats(&out.tape);
            table_grad.fill(0.0);
            scatter_rows(&out.grad_rows, &mut table_grad);
            let mut grads = out.encoder;
            let mut groups = encoder_groups(encoder, &mut grads);
            groups.push(group("context".into(), table.rows.as_slice_mut(), table_grad.as_slice_mut()));
            adam.step(&mut groups, config.learning_rate, config.clip_norm)?;
            stats.loss_sum += out.total;
            stats.batches += 1;
            stats.examples += mb;
            steps += 1;
            *inputs = Vec::with_capacity(config.batch_size * width);
            Ok(())
        };

        for pair in stream {
            let fresh = current.as_ref().is_none_or(|(pos, _)| *pos != pair.position);
            if fresh {
                let word = vocab.word(pair.target);
                let (perturbed, kind) = maybe_perturb_with_kind(word, config.perturb_prob, &chars, &mut rng);
                let proj = if kind.is_some() && perturbed != word {
                    spec.project(&perturbed)?
                } else {
                    cached[pair.target as usize].clone()
                };
                current = Some((pair.position, proj));
            }
            current.as_ref().expect("set above").1.write_input(&mut inputs);
            if let Some(full) = batcher.push(pair) {
                run_batch(full, &mut inputs, &mut rng)?;
            }
        }
        if let Some(rest) = batcher.finish() {
            run_batch(rest, &mut inputs, &mut rng)?;
        }

        let mean = if stats.batches > 0 {
            stats.loss_sum / stats.batches as f64
        } else {
            f64::NAN
        };
        epoch_losses.push(mean);
        examples += stats.examples;
        progress(&Progress {
            epoch: epoch + 1,
            step: steps,
            mean_loss: mean,
            examples_per_sec: stats.examples as f64 / epoch_start.elapsed().as_secs_f64().max(1e-9),
        });
    }

    model.round_to_f32();
    let report = TrainReport {
        model_kind: "npsg",
        epoch_losses,
        steps,
        examples,
        parameters: model.representer.encoder.parameter_count(),
        vocab_size: vocab.len(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Freshly initialized lookup-table model.
pub fn init_baseline(vocab: &Vocabulary, config: &TrainConfig) -> Result<BaselineModel> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyInput("vocabulary"));
    }
    let mut rng = rng_for(config.seed, STREAM_INIT);
    let dim = config.embedding_dim;
    let half = 0.5 / dim as f64;
    let input = Array2::from_shape_simple_fn((vocab.len(), dim), || rng.random_range(-half..=half));
    let context = Array2::from_shape_simple_fn((vocab.len(), dim), || rng.random_range(-1.0..=1.0));
    let mut model = BaselineModel {
        vocab: vocab.clone(),
        input,
        context,
        config: config.clone(),
    };
    model.round_to_f32();
    Ok(model)
}

/// Trains the lookup-table skip-gram baseline: same pairs, negatives and
/// optimizer, no regularizer, no augmentation.
pub fn train_baseline(
    tokens: &[u32],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut progress: impl FnMut(&Progress),
) -> Result<(BaselineModel, TrainReport)> {
    check_inputs(tokens, vocab, config)?;
    let start = Instant::now();
    let mut model = init_baseline(vocab, config)?;
    let noise = NoiseTable::new(vocab)?;
    let keep = keep_table(vocab, config)?;

    let mut input_grad = Array2::<f64>::zeros(model.input.dim());
    let mut context_grad = Array2::<f64>::zeros(model.context.dim());
    let mut adam = AdamState::new(&[model.input.len(), model.context.len()]);
    let mut rng = rng_for(config.seed, STREAM_BATCH);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0usize;
    let mut examples = 0usize;

    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        let stream = PairStream::new(
            tokens,
            keep.as_deref(),
            Window::Random(config.window_max),
            combine(config.seed, STREAM_PAIRS + epoch as u64),
        )?;
        let mut stats = EpochStats {
            loss_sum: 0.0,
            batches: 0,
            examples: 0,
        };
        let mut batcher = Batcher {
            size: config.batch_size,
            pairs: Vec::with_capacity(config.batch_size),
        };
        let mut run_batch = |pairs: Vec<Pair>, rng: &mut ChaCha8Rng| -> Result<()> {
            let mb = pairs.len();
            let mut reps = Array2::zeros((mb, model.dim()));
            for (i, p) in pairs.iter().enumerate() {
                reps.row_mut(i).assign(&model.input.row(p.target as usize));
            }
            let contexts: Vec<u32> = pairs.iter().map(|p| p.context).collect();
            let negatives = draw_negatives(&noise, config.negatives_k, mb, rng);
            let table = ContextTable {
                rows: std::mem::take(&mut model.context),
            };
            let out = neg_loss(&reps, &contexts, &negatives, config.negatives_k, &table);
            model.context = table.rows;
            let out = out?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {} step {}", epoch + 1, steps + 1)));
            }
            input_grad.fill(0.0);
            for (p, g) in pairs.iter().zip(out.grad_reps.rows()) {
                let mut r = input_grad.row_mut(p.target as usize);
                r += &g;
            }
            context_grad.fill(0.0);
            scatter_rows(&out.grad_rows, &mut context_grad);
            let mut groups = vec![
                group("input".into(), model.input.as_slice_mut(), input_grad.as_slice_mut()),
                group("context".into(), model.context.as_slice_mut(), context_grad.as_slice_mut()),
            ];
            adam.step(&mut groups, config.learning_rate, config.clip_norm)?;
            stats.loss_sum += out.loss;
            stats.batches += 1;
            stats.examples += mb;
            steps += 1;
            Ok(())
        };
        for pair in stream {
            if let Some(full) = batcher.push(pair) {
                run_batch(full, &mut rng)?;
            }
        }
        if let Some(rest) = batcher.finish() {
            run_batch(rest, &mut rng)?;
        }
        let mean = if stats.batches > 0 {
            stats.loss_sum / stats.batches as f64
        } else {
            f64::NAN
        };
        epoch_losses.push(mean);
        examples += stats.examples;
        progress(&Progress {
            epoch: epoch + 1,
            step: steps,
            mean_loss: mean,
            examples_per_sec: stats.examples as f64 / epoch_start.elapsed().as_secs_f64().max(1e-9),
        });
    }

    model.round_to_f32();
    let report = TrainReport {
        model_kind: "baseline",
        epoch_losses,
        steps,
        examples,
        parameters: model.parameter_count(),
        vocab_size: vocab.len(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
