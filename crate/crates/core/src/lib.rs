//! Embedding-free word representations.
//!
//! Words are hashed into fixed-width binary LSH projections of their
//! character features; an MLP with a batch-normalized output turns the
//! projection into a dense vector. The MLP is trained with a skip-gram
//! negative-sampling objective plus an in-batch cosine regularizer, so at
//! inference any string, misspelled or unseen, gets a representation
//! without a lookup table.

pub mod alias;
pub mod augment;
pub mod cli;
pub mod config;
pub mod container;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hash;
pub mod model;
pub mod objective;
pub mod projector;
pub mod train;

pub use config::TrainConfig;
pub use corpus::{NoiseTable, PairStream, Vocabulary};
pub use encoder::{ContextTable, EncoderParams, Representer};
pub use error::{Error, Result};
pub use model::{BaselineModel, Model, NpsgModel};
pub use projector::{BinaryProjection, ProjectionSpec};
