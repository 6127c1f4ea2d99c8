//! Losses and the optimizer.
//!
//! Everything is in minimization form: the skip-gram negative-sampling
//! objective is negated, the cosine regularizer and weight decay are added.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::NoiseTable;
use crate::encoder::{ContextTable, Dense, DropoutMasks, EncoderGrads, EncoderParams, ForwardTape};
use crate::error::{Error, Result};

/// Added to row norms before normalizing.
pub const NORM_EPSILON: f64 = 1e-12;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `count * k` noise draws, row-major per example.
pub fn draw_negatives<R: Rng + ?Sized>(noise: &NoiseTable, k: usize, count: usize, rng: &mut R) -> Vec<u32> {
    (0..count * k).map(|_| noise.sample(rng)).collect()
}

/// Gradient rows for the context table, one entry per touched row
/// occurrence, in a deterministic order.
pub type RowGrads = Vec<(u32, Array1<f64>)>;

#[derive(Debug, Clone)]
pub struct NegLoss {
    /// Mean per-example loss.
    pub loss: f64,
    pub grad_reps: Array2<f64>,
    pub grad_rows: RowGrads,
}

/// Negative-sampling loss, averaged over the batch.
///
/// Row `i` of `reps` is paired with `contexts[i]` and with the noise words
/// `negatives[i*k..(i+1)*k]`. Each example contributes
/// `−log σ(v′_cᵀv) − Σ log σ(−v′_nᵀv)`.
pub fn neg_loss(reps: &Array2<f64>, contexts: &[u32], negatives: &[u32], k: usize, table: &ContextTable) -> Result<NegLoss> {
    let mb = reps.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one negative sample".into()));
    }
    if contexts.len() != mb || negatives.len() != mb * k {
        return Err(Error::ShapeMismatch(format!(
            "{mb} representations, {} contexts, {} negatives for k={k}",
            contexts.len(),
            negatives.len()
        )));
    }
    if reps.ncols() != table.dim() {
        return Err(Error::ShapeMismatch(format!(
            "representation width {} vs context width {}",
            reps.ncols(),
            table.dim()
        )));
    }
    if let Some(&bad) = contexts.iter().chain(negatives).find(|&&id| id as usize >= table.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad as usize,
            len: table.len(),
        });
    }
    if mb == 0 {
        return Ok(NegLoss {
            loss: 0.0,
            grad_reps: Array2::zeros(reps.dim()),
            grad_rows: Vec::new(),
        });
    }

    let scale = 1.0 / mb as f64;
    let per_example: Vec<(f64, Array1<f64>, RowGrads)> = (0..mb)
        .into_par_iter()
        .map(|i| {
            let v = reps.row(i);
            let mut grad_v = Array1::zeros(v.len());
            let mut rows = Vec::with_capacity(k + 1);

            let c = contexts[i];
            let u = table.rows.row(c as usize);
            let s = u.dot(&v);
            let mut loss = softplus(-s);
            let g = (sigmoid(s) - 1.0) * scale;
            grad_v.scaled_add(g, &u);
            rows.push((c, v.to_owned() * g));

            for &n in &negatives[i * k..(i + 1) * k] {
                let u = table.rows.row(n as usize);
                let s = u.dot(&v);
                loss += softplus(s);
                let g = sigmoid(s) * scale;
                grad_v.scaled_add(g, &u);
                rows.push((n, v.to_owned() * g));
            }
            (loss, grad_v, rows)
        })
        .collect();

    let mut loss = 0.0;
    let mut grad_reps = Array2::zeros(reps.dim());
    let mut grad_rows = Vec::with_capacity(mb * (k + 1));
    for (i, (l, g, rows)) in per_example.into_iter().enumerate() {
        loss += l;
        grad_reps.row_mut(i).assign(&g);
        grad_rows.extend(rows);
    }
    Ok(NegLoss {
        loss: loss * scale,
        grad_reps,
        grad_rows,
    })
}

/// Adds each row gradient into a dense table gradient.
pub fn scatter_rows(rows: &RowGrads, into: &mut Array2<f64>) {
    for (id, g) in rows {
        let mut r = into.row_mut(*id as usize);
        r += g;
    }
}

/// `(λ/2)·‖V̂ V̂ᵀ‖²_F` over the L2-normalized rows of `reps`, and its
/// gradient with respect to `reps`. The diagonal is included.
pub fn cosine_reg_loss(reps: &Array2<f64>, lambda: f64) -> (f64, Array2<f64>) {
    if lambda == 0.0 || reps.nrows() == 0 {
        return (0.0, Array2::zeros(reps.dim()));
    }
    let lengths = reps.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let norms = lengths.mapv(|n| n + NORM_EPSILON);
    let unit = reps / &norms.view().insert_axis(Axis(1));
    let gram = unit.dot(&unit.t());
    let loss = 0.5 * lambda * gram.iter().map(|g| g * g).sum::<f64>();

    // ∂L/∂V̂ = 2λ G V̂ since G is symmetric.
    let d_unit = gram.dot(&unit) * (2.0 * lambda);
    let mut grad = Array2::zeros(reps.dim());
    for i in 0..reps.nrows() {
        let v = reps.row(i);
        let du = d_unit.row(i);
        let mut g = grad.row_mut(i);
        g.assign(&(&du / norms[i]));
        if lengths[i] > 0.0 {
            let coeff = v.dot(&du) / (norms[i] * norms[i] * lengths[i]);
            g.scaled_add(-coeff, &v);
        }
    }
    (loss, grad)
}

/// `(wd/2)·Σ‖W‖²` over the MLP weight matrices only.
pub fn weight_decay_loss(encoder: &EncoderParams, weight_decay: f64) -> f64 {
    0.5 * weight_decay
        * encoder
            .layers
            .iter()
            .map(|l| l.weight.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
}

pub fn add_weight_decay_grad(encoder: &EncoderParams, grads: &mut EncoderGrads, weight_decay: f64) {
    if weight_decay == 0.0 {
        return;
    }
    for (g, p) in grads.layers.iter_mut().zip(&encoder.layers) {
        g.weight.scaled_add(weight_decay, &p.weight);
    }
}

/// One minibatch with all of its randomness already drawn.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Encoder input rows, one per example.
    pub inputs: Array2<f64>,
    pub contexts: Vec<u32>,
    /// `k` noise words per example.
    pub negatives: Vec<u32>,
    pub masks: DropoutMasks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub negatives_k: usize,
    pub lambda: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub total: f64,
    pub neg: f64,
    pub reg: f64,
    pub decay: f64,
    pub encoder: EncoderGrads,
    pub grad_rows: RowGrads,
    pub grad_inputs: Array2<f64>,
    pub tape: ForwardTape,
}

/// Negative-sampling loss + cosine regularizer + weight decay, with exact
/// gradients for every encoder parameter and touched context row.
pub fn total_loss(encoder: &EncoderParams, table: &ContextTable, batch: &Batch, w: LossWeights) -> Result<TotalLoss> {
    let (reps, tape) = encoder.forward_train(&batch.inputs, &batch.masks)?;
    let neg = neg_loss(&reps, &batch.contexts, &batch.negatives, w.negatives_k, table)?;
    let (reg, reg_grad) = cosine_reg_loss(&reps, w.lambda);
    let decay = weight_decay_loss(encoder, w.weight_decay);
    let grad_reps = neg.grad_reps + reg_grad;
    let (mut grads, grad_inputs) = encoder.backward(&tape, &grad_reps)?;
    add_weight_decay_grad(encoder, &mut grads, w.weight_decay);
    Ok(TotalLoss {
        total: neg.loss + reg + decay,
        neg: neg.loss,
        reg,
        decay,
        encoder: grads,
        grad_rows: neg.grad_rows,
        grad_inputs,
        tape,
    })
}

/// A named, flat view of one parameter tensor and its gradient.
#[derive(Debug)]
pub struct ParamGroup<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub grads: &'a mut [f64],
}

/// Pairs every trainable encoder tensor with its gradient.
pub fn encoder_groups<'a>(encoder: &'a mut EncoderParams, grads: &'a mut EncoderGrads) -> Vec<ParamGroup<'a>> {
    let mut out = Vec::new();
    for (i, (p, g)) in encoder.layers.iter_mut().zip(grads.layers.iter_mut()).enumerate() {
        let Dense { weight, bias } = p;
        out.push(group(format!("mlp.{i}.weight"), weight.as_slice_mut(), g.weight.as_slice_mut()));
        out.push(group(format!("mlp.{i}.bias"), bias.as_slice_mut(), g.bias.as_slice_mut()));
    }
    out.push(group("bn.gamma".into(), encoder.bn_gamma.as_slice_mut(), grads.bn_gamma.as_slice_mut()));
    out.push(group("bn.beta".into(), encoder.bn_beta.as_slice_mut(), grads.bn_beta.as_slice_mut()));
    out
}

pub fn group<'a>(name: String, values: Option<&'a mut [f64]>, grads: Option<&'a mut [f64]>) -> ParamGroup<'a> {
    ParamGroup {
        values: values.expect("parameters are contiguous"),
        grads: grads.expect("gradients are contiguous"),
        name,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Factor applied to the gradients (1 when not clipped).
    pub clip_scale: f64,
}

/// Clips `groups` in place to global norm `clip_norm`.
pub fn clip_global_norm(groups: &mut [ParamGroup<'_>], clip_norm: f64) -> Result<StepStats> {
    let mut sq = 0.0;
    for g in groups.iter() {
        let s: f64 = g.grads.iter().map(|x| x * x).sum();
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", g.name)));
        }
        sq += s;
    }
    let grad_norm = sq.sqrt();
    let clip_scale = if grad_norm > clip_norm { clip_norm / grad_norm } else { 1.0 };
    if clip_scale != 1.0 {
        for g in groups.iter_mut() {
            g.grads.iter_mut().for_each(|x| *x *= clip_scale);
        }
    }
    Ok(StepStats { grad_norm, clip_scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPSILON,
        }
    }

    pub fn for_groups(groups: &[ParamGroup<'_>]) -> Self {
        Self::new(&groups.iter().map(|g| g.values.len()).collect::<Vec<_>>())
    }

    /// Global-norm clipping followed by a bias-corrected Adam update.
    pub fn step(&mut self, groups: &mut [ParamGroup<'_>], lr: f64, clip_norm: f64) -> Result<StepStats> {
        if groups.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter groups but optimizer state has {}",
                groups.len(),
                self.m.len()
            )));
        }
        for (g, m) in groups.iter().zip(&self.m) {
            if g.values.len() != m.len() || g.grads.len() != m.len() {
                return Err(Error::ShapeMismatch(format!("optimizer state for {}", g.name)));
            }
        }
        let stats = clip_global_norm(groups, clip_norm)?;

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((g, m), v) in groups.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((p, &grad), m), v) in g.values.iter_mut().zip(g.grads.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * grad;
                *v = b2 * *v + (1.0 - b2) * grad * grad;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(stats)
    }
}
