//! Training hyperparameters and the flat `key = value` configuration format.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::projector::ProjectionSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub negatives_k: usize,
    /// Weight of the in-batch cosine regularizer.
    pub lambda: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub window_max: usize,
    /// Subsampling threshold; `inf` disables subsampling.
    pub subsample_t: f64,
    pub perturb_prob: f64,
    pub seed: u64,
    pub dropout_p: f64,
    /// Hidden and output widths of the encoder MLP; the input width comes
    /// from the projection.
    pub mlp_sizes: Vec<usize>,
    /// Lookup-table width of the baseline skip-gram model.
    pub embedding_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            negatives_k: 25,
            lambda: 0.01,
            batch_size: 1024,
            learning_rate: 0.001,
            clip_norm: 5.0,
            weight_decay: 0.0005,
            epochs: 10,
            window_max: 5,
            subsample_t: 1e-5,
            perturb_prob: 0.4,
            seed: 1,
            dropout_p: 0.65,
            mlp_sizes: vec![2048, 100],
            embedding_dim: 100,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.negatives_k == 0 {
            return bad("negatives_k must be positive".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization".into());
        }
        if self.window_max == 0 {
            return bad("window_max must be positive".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("subsample_t", self.subsample_t),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("weight_decay", self.weight_decay)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.perturb_prob) {
            return bad(format!("perturb_prob {} not in [0, 1]", self.perturb_prob));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} not in [0, 1)", self.dropout_p));
        }
        if self.mlp_sizes.is_empty() || self.mlp_sizes.contains(&0) {
            return bad(format!("mlp_sizes must be nonempty and positive, got {:?}", self.mlp_sizes));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        Ok(())
    }

    /// Sets one field by name. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "negatives_k" => self.negatives_k = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "window_max" => self.window_max = parse(key, value)?,
            "subsample_t" => self.subsample_t = parse(key, value)?,
            "perturb_prob" => self.perturb_prob = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dropout_p" => self.dropout_p = parse(key, value)?,
            "mlp_sizes" => self.mlp_sizes = parse_list(key, value)?,
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "negatives_k = {}", self.negatives_k);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "clip_norm = {}", self.clip_norm);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "window_max = {}", self.window_max);
        let _ = writeln!(s, "subsample_t = {}", self.subsample_t);
        let _ = writeln!(s, "perturb_prob = {}", self.perturb_prob);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "dropout_p = {}", self.dropout_p);
        let _ = writeln!(s, "mlp_sizes = {}", join(&self.mlp_sizes));
        let _ = writeln!(s, "embedding_dim = {}", self.embedding_dim);
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, key, value) in kv_lines(text)? {
            if !cfg.set(key, value)? {
                return Err(unknown_key(line, key));
            }
        }
        Ok(cfg)
    }
}

/// Sets a projection field by name. Returns `false` for unknown keys.
pub fn set_projection_key(spec: &mut ProjectionSpec, key: &str, value: &str) -> Result<bool> {
    match key {
        "projection_seed" => spec.seed = parse(key, value)?,
        "num_projections" => spec.num_projections = parse(key, value)?,
        "bits_per_projection" => spec.bits_per_projection = parse(key, value)?,
        "ngram_orders" => spec.ngram_orders = parse_list(key, value)?,
        "skipgram" => spec.skipgram = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// A configuration file may mix training and projection keys.
pub fn parse_config(text: &str) -> Result<(TrainConfig, ProjectionSpec)> {
    let mut cfg = TrainConfig::default();
    let mut spec = ProjectionSpec::default();
    for (line, key, value) in kv_lines(text)? {
        if !cfg.set(key, value)? && !set_projection_key(&mut spec, key, value)? {
            return Err(unknown_key(line, key));
        }
    }
    Ok((cfg, spec))
}

fn unknown_key(line: usize, key: &str) -> Error {
    Error::Parse {
        what: "config",
        line,
        msg: format!("unknown key {key:?}"),
    }
}

/// `(line number, key, value)` for every non-blank, non-comment line.
fn kv_lines(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            what: "config",
            line: i + 1,
            msg: "expected key = value".into(),
        })?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}
