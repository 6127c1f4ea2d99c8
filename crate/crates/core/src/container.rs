//! Versioned binary model container.
//!
//! ```text
//! magic            4 bytes  "NPSG"
//! format_version   u16      1
//! model_kind       u8       0 = projection model, 1 = lookup baseline
//! flags            u8       bit 0: vocabulary + context table present
//! projection       (kind 0 only) u64 seed, u32 T, u32 d,
//!                  u8 n, n × u8 n-gram order, u8 skipgram
//! config           u32 length + UTF-8 `key = value` text
//! vocabulary       (kind 1, or flag bit 0) u64 total_tokens, u32 count,
//!                  count × (u32 length + UTF-8 word, u64 count)
//! tensors          u32 count, count × (u16 length + UTF-8 name,
//!                  u8 rank, rank × u32 dim, row-major f32 data)
//! checksum         u64 FNV-1a of every preceding byte
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::config::TrainConfig;
use crate::corpus::Vocabulary;
use crate::encoder::{ContextTable, Dense, EncoderParams, Representer};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::model::{BaselineModel, Model, NpsgModel, TrainingState};
use crate::projector::ProjectionSpec;

pub const MAGIC: &[u8; 4] = b"NPSG";
pub const FORMAT_VERSION: u16 = 1;
pub const KIND_NPSG: u8 = 0;
pub const KIND_BASELINE: u8 = 1;
const FLAG_TRAINING_STATE: u8 = 1;

struct Tensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn vector(name: &str, v: &Array1<f64>) -> Self {
        Self {
            name: name.to_owned(),
            dims: vec![v.len()],
            data: v.iter().copied().collect(),
        }
    }

    fn matrix(name: &str, m: &Array2<f64>) -> Self {
        Self {
            name: name.to_owned(),
            dims: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes32(&mut self, b: &[u8]) -> Result<()> {
        self.u32(b.len())?;
        self.0.extend_from_slice(b);
        Ok(())
    }
}

/// Serializes a model. For projection models the vocabulary and context
/// table are written only when `include_training_state` is set and the
/// model has them.
pub fn encode(model: &Model, include_training_state: bool) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);

    let mut tensors = Vec::new();
    match model {
        Model::Npsg(m) => {
            let state = m.training_state.as_ref().filter(|_| include_training_state);
            w.u8(KIND_NPSG);
            w.u8(if state.is_some() { FLAG_TRAINING_STATE } else { 0 });
            let spec = &m.representer.spec;
            w.u64(spec.seed);
            w.u32(spec.num_projections)?;
            w.u32(spec.bits_per_projection)?;
            w.u8(u8::try_from(spec.ngram_orders.len()).map_err(|_| Error::Format("too many n-gram orders".into()))?);
            for &n in &spec.ngram_orders {
                w.u8(u8::try_from(n).map_err(|_| Error::Format(format!("n-gram order {n}")))?);
            }
            w.u8(u8::from(spec.skipgram));
            w.bytes32(m.config.to_kv().as_bytes())?;
            if let Some(state) = state {
                write_vocab(&mut w, &state.vocab)?;
            }

            let enc = &m.representer.encoder;
            for (i, l) in enc.layers.iter().enumerate() {
                tensors.push(Tensor::matrix(&format!("mlp.{i}.weight"), &l.weight));
                tensors.push(Tensor::vector(&format!("mlp.{i}.bias"), &l.bias));
            }
            tensors.push(Tensor::vector("bn.gamma", &enc.bn_gamma));
            tensors.push(Tensor::vector("bn.beta", &enc.bn_beta));
            tensors.push(Tensor::vector("bn.running_mean", &enc.bn_running_mean));
            tensors.push(Tensor::vector("bn.running_var", &enc.bn_running_var));
            if let Some(state) = state {
                tensors.push(Tensor::matrix("context", &state.context.rows));
            }
        }
        Model::Baseline(m) => {
            w.u8(KIND_BASELINE);
            w.u8(FLAG_TRAINING_STATE);
            w.bytes32(m.config.to_kv().as_bytes())?;
            write_vocab(&mut w, &m.vocab)?;
            tensors.push(Tensor::matrix("input", &m.input));
            tensors.push(Tensor::matrix("context", &m.context));
        }
    }

    w.u32(tensors.len())?;
    for t in &tensors {
        let name = t.name.as_bytes();
        w.u16(u16::try_from(name.len()).map_err(|_| Error::Format("tensor name too long".into()))?);
        w.0.extend_from_slice(name);
        w.u8(t.dims.len() as u8);
        for &d in &t.dims {
            w.u32(d)?;
        }
        w.0.reserve(t.data.len() * 4);
        for &x in &t.data {
            w.0.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let checksum = fnv1a64(&w.0);
    w.u64(checksum);
    Ok(w.0)
}

fn write_vocab(w: &mut Writer, vocab: &Vocabulary) -> Result<()> {
    w.u64(vocab.total_tokens());
    w.u32(vocab.len())?;
    for (word, &count) in vocab.words().iter().zip(vocab.counts()) {
        w.bytes32(word.as_bytes())?;
        w.u64(count);
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self, len: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(len)?).map_err(|_| Error::Format("invalid UTF-8".into()))
    }
    fn str32(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        self.str(n)
    }
}

/// Parses a container, verifying magic, version and checksum before
/// anything else.
pub fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 2 + 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a64(body) != stored {
        return Err(Error::Format("checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let kind = r.u8()?;
    let flags = r.u8()?;
    if flags & !FLAG_TRAINING_STATE != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }

    let model = match kind {
        KIND_NPSG => {
            let seed = r.u64()?;
            let num_projections = r.u32()?;
            let bits_per_projection = r.u32()?;
            let n = r.u8()? as usize;
            let ngram_orders = (0..n).map(|_| r.u8().map(usize::from)).collect::<Result<_>>()?;
            let skipgram = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("bad skipgram flag {b}"))),
            };
            let spec = ProjectionSpec {
                seed,
                num_projections,
                bits_per_projection,
                ngram_orders,
                skipgram,
            };
            let config = TrainConfig::from_kv(r.str32()?)?;
            let vocab = if flags & FLAG_TRAINING_STATE != 0 {
                Some(read_vocab(&mut r)?)
            } else {
                None
            };
            let mut tensors = read_tensors(&mut r)?.into_iter();
            let mut layers = Vec::new();
            loop {
                let i = layers.len();
                let next = tensors.as_slice().first().map(|t| t.name.clone());
                if next.as_deref() != Some(format!("mlp.{i}.weight").as_str()) {
                    break;
                }
                let weight = matrix(tensors.next(), &format!("mlp.{i}.weight"))?;
                let bias = vector(tensors.next(), &format!("mlp.{i}.bias"))?;
                layers.push(Dense { weight, bias });
            }
            if layers.is_empty() {
                return Err(Error::Format("no encoder layers".into()));
            }
            let mut encoder = EncoderParams::with_layers(layers, config.dropout_p);
            encoder.bn_gamma = vector(tensors.next(), "bn.gamma")?;
            encoder.bn_beta = vector(tensors.next(), "bn.beta")?;
            encoder.bn_running_mean = vector(tensors.next(), "bn.running_mean")?;
            encoder.bn_running_var = vector(tensors.next(), "bn.running_var")?;
            let training_state = match vocab {
                Some(vocab) => {
                    let rows = matrix(tensors.next(), "context")?;
                    if rows.dim() != (vocab.len(), encoder.output_dim()) {
                        return Err(Error::Format("context table shape".into()));
                    }
                    Some(TrainingState {
                        vocab,
                        context: ContextTable { rows },
                    })
                }
                None => None,
            };
            if let Some(t) = tensors.next() {
                return Err(Error::Format(format!("unexpected tensor {:?}", t.name)));
            }
            Model::Npsg(NpsgModel {
                representer: Representer::new(spec, encoder).map_err(|e| Error::Format(e.to_string()))?,
                config,
                training_state,
            })
        }
        KIND_BASELINE => {
            let config = TrainConfig::from_kv(r.str32()?)?;
            let vocab = read_vocab(&mut r)?;
            let mut tensors = read_tensors(&mut r)?.into_iter();
            let input = matrix(tensors.next(), "input")?;
            let context = matrix(tensors.next(), "context")?;
            if tensors.next().is_some() {
                return Err(Error::Format("unexpected trailing tensor".into()));
            }
            if input.nrows() != vocab.len() || context.dim() != input.dim() {
                return Err(Error::Format("baseline table shapes".into()));
            }
            Model::Baseline(BaselineModel {
                vocab,
                input,
                context,
                config,
            })
        }
        k => return Err(Error::Format(format!("unknown model kind {k}"))),
    };
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes before checksum".into()));
    }
    Ok(model)
}

fn read_vocab(r: &mut Reader<'_>) -> Result<Vocabulary> {
    let total = r.u64()?;
    let n = r.u32()?;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let word = r.str32()?.to_owned();
        let count = r.u64()?;
        entries.push((word, count));
    }
    Vocabulary::from_counts(entries, total).map_err(|e| Error::Format(e.to_string()))
}

fn read_tensors(r: &mut Reader<'_>) -> Result<Vec<Tensor>> {
    let n = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let name_len = r.u16()? as usize;
        let name = r.str(name_len)?.to_owned();
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("tensor too large".into()))?;
        let raw = r.take(len.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        out.push(Tensor { name, dims, data });
    }
    Ok(out)
}

fn expect(t: Option<Tensor>, name: &str, rank: usize) -> Result<Tensor> {
    let t = t.ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
    if t.name != name || t.dims.len() != rank {
        return Err(Error::Format(format!(
            "expected rank-{rank} tensor {name}, found {:?} with dims {:?}",
            t.name, t.dims
        )));
    }
    Ok(t)
}

fn vector(t: Option<Tensor>, name: &str) -> Result<Array1<f64>> {
    Ok(Array1::from(expect(t, name, 1)?.data))
}

fn matrix(t: Option<Tensor>, name: &str) -> Result<Array2<f64>> {
    let t = expect(t, name, 2)?;
    Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save(model: &Model, path: impl AsRef<Path>, include_training_state: bool) -> Result<()> {
    fs::write(path, encode(model, include_training_state)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    decode(&fs::read(path)?)
}
