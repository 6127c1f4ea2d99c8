//! Trained model types.

use ndarray::{Array1, Array2};

use crate::config::TrainConfig;
use crate::corpus::Vocabulary;
use crate::encoder::{ContextTable, Representer};
use crate::error::{Error, Result};
use crate::eval::WordVectors;

/// Projection skip-gram model. Only `representer` is needed at inference;
/// the context table and vocabulary are training state.
#[derive(Debug, Clone, PartialEq)]
pub struct NpsgModel {
    pub representer: Representer,
    pub config: TrainConfig,
    pub training_state: Option<TrainingState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub vocab: Vocabulary,
    pub context: ContextTable,
}

/// Lookup-table skip-gram model.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub vocab: Vocabulary,
    pub input: Array2<f64>,
    pub context: Array2<f64>,
    pub config: TrainConfig,
}

impl BaselineModel {
    /// Both tables: `2·|V|·dim`.
    pub fn parameter_count(&self) -> usize {
        self.input.len() + self.context.len()
    }

    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn round_to_f32(&mut self) {
        self.input.mapv_inplace(|x| x as f32 as f64);
        self.context.mapv_inplace(|x| x as f32 as f64);
    }
}

impl NpsgModel {
    pub fn round_to_f32(&mut self) {
        self.representer.encoder.round_to_f32();
        if let Some(state) = &mut self.training_state {
            state.context.rows.mapv_inplace(|x| x as f32 as f64);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Npsg(NpsgModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Npsg(_) => "npsg",
            Model::Baseline(_) => "baseline",
        }
    }

    pub fn config(&self) -> &TrainConfig {
        match self {
            Model::Npsg(m) => &m.config,
            Model::Baseline(m) => &m.config,
        }
    }

    /// Training vocabulary, when the model carries one.
    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match self {
            Model::Npsg(m) => m.training_state.as_ref().map(|s| &s.vocab),
            Model::Baseline(m) => Some(&m.vocab),
        }
    }
}

impl WordVectors for NpsgModel {
    fn dim(&self) -> usize {
        self.representer.dim()
    }

    fn vector(&self, word: &str) -> Result<Option<Array1<f64>>> {
        self.representer.vector(word)
    }

    fn vectors(&self, words: &[&str]) -> Result<Vec<Option<Array1<f64>>>> {
        self.representer.vectors(words)
    }
}

impl WordVectors for BaselineModel {
    fn dim(&self) -> usize {
        self.input.ncols()
    }

    fn vector(&self, word: &str) -> Result<Option<Array1<f64>>> {
        if word.is_empty() {
            return Err(Error::EmptyInput("word"));
        }
        Ok(self
            .vocab
            .id(word)
            .map(|id| self.input.row(id as usize).to_owned()))
    }
}

impl WordVectors for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Npsg(m) => m.dim(),
            Model::Baseline(m) => m.dim(),
        }
    }

    fn vector(&self, word: &str) -> Result<Option<Array1<f64>>> {
        match self {
            Model::Npsg(m) => m.vector(word),
            Model::Baseline(m) => m.vector(word),
        }
    }

    fn vectors(&self, words: &[&str]) -> Result<Vec<Option<Array1<f64>>>> {
        match self {
            Model::Npsg(m) => m.vectors(words),
            Model::Baseline(m) => m.vectors(words),
        }
    }
}
