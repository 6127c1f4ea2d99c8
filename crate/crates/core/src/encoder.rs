//! The trainable encoder: an MLP with ReLU + dropout on every hidden layer
//! and batch normalization on the final affine output, together with the
//! context table used by the skip-gram objective during training.
//!
//! Activations are row-major `batch × width`; weight matrices are
//! `in × out` so a layer is `x · W + b`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::projector::ProjectionSpec;

pub const DEFAULT_DROPOUT: f64 = 0.65;
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot/Xavier uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((inputs, outputs), || {
                rng.random_range(-limit..=limit)
            }),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Dense>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub bn_running_mean: Array1<f64>,
    pub bn_running_var: Array1<f64>,
    /// Drop probability after each hidden ReLU.
    pub dropout_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted-dropout multipliers for each hidden layer: entries are 0 or
/// `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(pub Vec<Array2<f64>>);

/// Everything [`EncoderParams::backward`] needs from a train-mode forward.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// Input to each affine layer (post-dropout for hidden layers).
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    hidden_pre: Vec<Array2<f64>>,
    masks: DropoutMasks,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

impl ForwardTape {
    pub fn batch_size(&self) -> usize {
        self.normalized.nrows()
    }

    /// Per-dimension batch statistics of the final affine output.
    pub fn batch_stats(&self) -> (&Array1<f64>, &Array1<f64>) {
        (&self.batch_mean, &self.batch_var)
    }

    /// Batch-normalized output before gamma and beta.
    pub fn normalized(&self) -> &Array2<f64> {
        &self.normalized
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Dense>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
            bn_gamma: Array1::zeros(params.output_dim()),
            bn_beta: Array1::zeros(params.output_dim()),
        }
    }
}

impl EncoderParams {
    /// `layer_sizes` is `[input, hidden..., output]`.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], dropout_p: f64, rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes, dropout_p)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::xavier(w[0], w[1], rng))
            .collect();
        Ok(Self::with_layers(layers, dropout_p))
    }

    pub fn zeros(layer_sizes: &[usize], dropout_p: f64) -> Result<Self> {
        check_sizes(layer_sizes, dropout_p)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self::with_layers(layers, dropout_p))
    }

    /// Fresh batch-norm parameters around the given layers.
    pub fn with_layers(layers: Vec<Dense>, dropout_p: f64) -> Self {
        let out = layers.last().map_or(0, Dense::outputs);
        Self {
            layers,
            bn_gamma: Array1::ones(out),
            bn_beta: Array1::zeros(out),
            bn_running_mean: Array1::zeros(out),
            bn_running_var: Array1::ones(out),
            dropout_p,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    /// Σ (in·out + out) over layers, plus gamma, beta and both running
    /// statistics.
    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.layer_sizes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ShapeMismatch("encoder has no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::ShapeMismatch(format!("layer {i} bias length")));
            }
        }
        let out = self.output_dim();
        for (name, v) in [
            ("bn gamma", &self.bn_gamma),
            ("bn beta", &self.bn_beta),
            ("bn running mean", &self.bn_running_mean),
            ("bn running var", &self.bn_running_var),
        ] {
            if v.len() != out {
                return Err(Error::ShapeMismatch(format!("{name} has length {}, want {out}", v.len())));
            }
        }
        if self.bn_running_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("running variance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    /// Draws fresh dropout masks for a batch of `batch` rows.
    pub fn sample_masks<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> DropoutMasks {
        let keep = 1.0 - self.dropout_p;
        let scale = 1.0 / keep;
        DropoutMasks(
            self.hidden_layers()
                .map(|l| {
                    Array2::from_shape_simple_fn((batch, l.outputs()), || {
                        if self.dropout_p == 0.0 || rng.random::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    })
                })
                .collect(),
        )
    }

    /// All-ones masks: train-mode forward without dropout.
    pub fn identity_masks(&self, batch: usize) -> DropoutMasks {
        DropoutMasks(
            self.hidden_layers()
                .map(|l| Array2::ones((batch, l.outputs())))
                .collect(),
        )
    }

    fn hidden_layers(&self) -> impl Iterator<Item = &Dense> {
        self.layers[..self.layers.len() - 1].iter()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input width {} but encoder expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inference forward pass using running statistics. Mutates nothing.
    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for layer in &self.layers[..last] {
            h = h.dot(&layer.weight) + &layer.bias;
            h.mapv_inplace(relu);
        }
        let z = h.dot(&self.layers[last].weight) + &self.layers[last].bias;
        let scale = &self.bn_gamma / &self.bn_running_var.mapv(|v| (v + BN_EPSILON).sqrt());
        let shift = &self.bn_beta - &(&self.bn_running_mean * &scale);
        Ok(z * &scale + &shift)
    }

    /// Train-mode forward pass with batch statistics. Running statistics
    /// are left untouched; see [`EncoderParams::update_running_stats`].
    pub fn forward_train(&self, x: &Array2<f64>, masks: &DropoutMasks) -> Result<(Array2<f64>, ForwardTape)> {
        self.check_input(x)?;
        let mb = x.nrows();
        if mb < 2 {
            return Err(Error::InvalidArgument(format!(
                "train-mode forward needs at least 2 rows for batch statistics, got {mb}"
            )));
        }
        let last = self.layers.len() - 1;
        if masks.0.len() != last {
            return Err(Error::ShapeMismatch(format!(
                "{} dropout masks for {last} hidden layers",
                masks.0.len()
            )));
        }

        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden_pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (layer, mask) in self.layers[..last].iter().zip(&masks.0) {
            if mask.dim() != (mb, layer.outputs()) {
                return Err(Error::ShapeMismatch("dropout mask shape".into()));
            }
            let z = h.dot(&layer.weight) + &layer.bias;
            let a = z.mapv(relu) * mask;
            inputs.push(h);
            hidden_pre.push(z);
            h = a;
        }
        let z = h.dot(&self.layers[last].weight) + &self.layers[last].bias;
        inputs.push(h);

        let n = mb as f64;
        let mean = z.sum_axis(Axis(0)) / n;
        let centered = &z - &mean;
        let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
        let normalized = centered * &inv_std;
        let y = &normalized * &self.bn_gamma + &self.bn_beta;

        let tape = ForwardTape {
            inputs,
            hidden_pre,
            masks: masks.clone(),
            normalized,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        };
        Ok((y, tape))
    }

    /// Moves running statistics toward the batch statistics in `tape`.
    /// The variance estimate is the unbiased one.
    pub fn update_running_stats(&mut self, tape: &ForwardTape) {
        let n = tape.batch_size() as f64;
        let unbiased = &tape.batch_var * (n / (n - 1.0));
        self.bn_running_mean = &self.bn_running_mean * BN_MOMENTUM + &tape.batch_mean * (1.0 - BN_MOMENTUM);
        self.bn_running_var = &self.bn_running_var * BN_MOMENTUM + unbiased * (1.0 - BN_MOMENTUM);
    }

    /// Gradients of a scalar loss with respect to every trainable
    /// parameter and to the input rows, given `grad_out` = ∂loss/∂output.
    pub fn backward(&self, tape: &ForwardTape, grad_out: &Array2<f64>) -> Result<(EncoderGrads, Array2<f64>)> {
        let last = self.layers.len() - 1;
        if tape.inputs.len() != self.layers.len() || tape.hidden_pre.len() != last {
            return Err(Error::ShapeMismatch("tape depth does not match encoder".into()));
        }
        if grad_out.dim() != tape.normalized.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs forward output {:?}",
                grad_out.dim(),
                tape.normalized.dim()
            )));
        }
        for (layer, input) in self.layers.iter().zip(&tape.inputs) {
            if input.ncols() != layer.inputs() {
                return Err(Error::ShapeMismatch("tape was produced by another encoder".into()));
            }
        }

        let n = grad_out.nrows() as f64;
        let xhat = &tape.normalized;
        let d_gamma = (grad_out * xhat).sum_axis(Axis(0));
        let d_beta = grad_out.sum_axis(Axis(0));
        let d_xhat = grad_out * &self.bn_gamma;
        let sum_dxhat = d_xhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&d_xhat * xhat).sum_axis(Axis(0));
        let mut dz = (&d_xhat * n - &sum_dxhat - &(xhat * &sum_dxhat_xhat)) * &(&tape.inv_std / n);

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut grad_input = Array2::zeros((0, 0));
        for l in (0..self.layers.len()).rev() {
            let input = &tape.inputs[l];
            layer_grads.push(Dense {
                weight: input.t().dot(&dz),
                bias: dz.sum_axis(Axis(0)),
            });
            let d_in = dz.dot(&self.layers[l].weight.t());
            if l == 0 {
                grad_input = d_in;
            } else {
                let pre = &tape.hidden_pre[l - 1];
                let mask = &tape.masks.0[l - 1];
                let mut d = d_in * mask;
                ndarray::Zip::from(&mut d).and(pre).for_each(|g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
                dz = d;
            }
        }
        layer_grads.reverse();

        Ok((
            EncoderGrads {
                layers: layer_grads,
                bn_gamma: d_gamma,
                bn_beta: d_beta,
            },
            grad_input,
        ))
    }

    /// Rounds every parameter to the nearest `f32`, the storage precision.
    pub fn round_to_f32(&mut self) {
        let round = |x: f64| x as f32 as f64;
        for l in &mut self.layers {
            l.weight.mapv_inplace(round);
            l.bias.mapv_inplace(round);
        }
        for v in [
            &mut self.bn_gamma,
            &mut self.bn_beta,
            &mut self.bn_running_mean,
            &mut self.bn_running_var,
        ] {
            v.mapv_inplace(round);
        }
    }
}

fn check_sizes(layer_sizes: &[usize], dropout_p: f64) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "encoder needs an input size and at least one positive layer size, got {layer_sizes:?}"
        )));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::InvalidArgument(format!("dropout {dropout_p} not in [0, 1)")));
    }
    Ok(())
}

/// Closed-form encoder parameter count for `[input, hidden..., output]`.
pub fn parameter_count(layer_sizes: &[usize]) -> usize {
    let affine: usize = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    affine + 4 * layer_sizes.last().copied().unwrap_or(0)
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Encoder plus the featurizer that feeds it: the full representation
/// function for arbitrary strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Representer {
    pub spec: ProjectionSpec,
    pub encoder: EncoderParams,
}

impl Representer {
    pub fn new(spec: ProjectionSpec, encoder: EncoderParams) -> Result<Self> {
        spec.validate()?;
        encoder.validate()?;
        if spec.total_bits() != encoder.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "projection width {} but encoder input {}",
                spec.total_bits(),
                encoder.input_dim()
            )));
        }
        Ok(Self { spec, encoder })
    }

    pub fn output_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Representation of any nonempty string, in vocabulary or not.
    pub fn represent(&self, word: &str) -> Result<Array1<f64>> {
        let x = self.spec.project(word)?.to_input();
        let x = Array2::from_shape_vec((1, x.len()), x).expect("row shape");
        Ok(self.encoder.infer(&x)?.row(0).to_owned())
    }

    /// Batched [`Representer::represent`].
    pub fn represent_batch<S: AsRef<str>>(&self, words: &[S]) -> Result<Array2<f64>> {
        let x = self.projection_inputs(words)?;
        self.encoder.infer(&x)
    }

    /// Encoder input rows for `words`.
    pub fn projection_inputs<S: AsRef<str>>(&self, words: &[S]) -> Result<Array2<f64>> {
        let width = self.spec.total_bits();
        let mut flat = Vec::with_capacity(words.len() * width);
        for w in words {
            self.spec.project(w.as_ref())?.write_input(&mut flat);
        }
        Ok(Array2::from_shape_vec((words.len(), width), flat).expect("input shape"))
    }
}

/// The `v′` table: one row per vocabulary word, training only.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTable {
    pub rows: Array2<f64>,
}

impl ContextTable {
    /// Uniform in [-1, 1].
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            rows: Array2::from_shape_simple_fn((vocab_size, dim), || rng.random_range(-1.0..=1.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Pre-sigmoid logit `v′(context)ᵀ target`.
    pub fn score(&self, target: &[f64], context_id: usize) -> Result<f64> {
        if context_id >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: context_id,
                len: self.len(),
            });
        }
        if target.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "target length {} vs context dim {}",
                target.len(),
                self.dim()
            )));
        }
        Ok(self
            .rows
            .row(context_id)
            .iter()
            .zip(target)
            .map(|(a, b)| a * b)
            .sum())
    }
}
