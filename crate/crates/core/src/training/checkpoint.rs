//! Binary checkpoint format.
//!
//! ```text
//! "FFRCKPT1"
//! u32  format version
//! u32  metadata length, then UTF-8 JSON metadata
//! u32  tensor count
//! per tensor:
//!     u16 name length, name bytes
//!     u8  rank, rank × u32 dims
//!     f32 × product(dims), row-major
//! u64  FNV-1a over every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, TrainingError};
use crate::model::{ModelConfig, ModelParameters};
use crate::numerics::{ParamSet, Tensor};
use crate::tokenizer::{DiacriticMode, Vocabulary};

pub const MAGIC: &[u8; 8] = b"FFRCKPT1";
pub const FORMAT_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor, TrainingError> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&x| x as f64).collect())
            .map_err(|e| TrainingError::CorruptCheckpoint(format!("tensor `{}`: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VocabMeta {
    hash: String,
    tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model_config: ModelConfig,
    mode: DiacriticMode,
    src_vocab: VocabMeta,
    tgt_vocab: VocabMeta,
    step: u64,
}

/// A trained (or freshly initialised) model with its vocabularies and
/// optimizer state, stored at `f32` precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub model_config: ModelConfig,
    pub mode: DiacriticMode,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    /// Model parameters in canonical layout order.
    pub tensors: Vec<NamedTensor>,
    /// First then second Adam moments, named `adam.m.<param>` / `adam.v.<param>`.
    pub optimizer: Vec<NamedTensor>,
    pub step: u64,
}

impl Checkpoint {
    pub fn new(
        model: &ModelParameters,
        optimizer: &Adam,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
    ) -> Self {
        let params = model.params();
        let tensors = params.iter().map(|p| NamedTensor::from_tensor(&p.name, p.value())).collect();
        let mut moments = Vec::with_capacity(2 * params.len());
        for (p, m) in params.iter().zip(&optimizer.m) {
            moments.push(NamedTensor::from_tensor(format!("adam.m.{}", p.name), m));
        }
        for (p, v) in params.iter().zip(&optimizer.v) {
            moments.push(NamedTensor::from_tensor(format!("adam.v.{}", p.name), v));
        }
        Self {
            version: FORMAT_VERSION,
            model_config: *model.config(),
            mode: src_vocab.mode(),
            src_vocab: src_vocab.clone(),
            tgt_vocab: tgt_vocab.clone(),
            tensors,
            optimizer: moments,
            step: optimizer.step,
        }
    }

    /// Rebuilds model parameters (widened to `f64`).
    pub fn model(&self) -> Result<ModelParameters, TrainingError> {
        let mut params = ParamSet::new();
        for t in &self.tensors {
            params.insert(t.name.clone(), t.to_tensor()?)?;
        }
        Ok(ModelParameters::from_param_set(self.model_config, params)?)
    }

    /// Rebuilds the optimizer state for `model`.
    pub fn optimizer_state(&self, model: &ModelParameters) -> Result<Adam, TrainingError> {
        let n = model.params().len();
        if self.optimizer.len() != 2 * n {
            return Err(TrainingError::CorruptCheckpoint(format!(
                "expected {} optimizer tensors, found {}",
                2 * n,
                self.optimizer.len()
            )));
        }
        let mut adam = Adam::new(model.params());
        for (i, p) in model.params().iter().enumerate() {
            for (slot, prefix, store) in [(i, "adam.m.", &mut adam.m), (n + i, "adam.v.", &mut adam.v)] {
                let t = &self.optimizer[slot];
                if t.name != format!("{prefix}{}", p.name) || t.shape != p.value().shape() {
                    return Err(TrainingError::CorruptCheckpoint(format!("unexpected optimizer tensor `{}`", t.name)));
                }
                store[i] = t.to_tensor()?;
            }
        }
        adam.step = self.step;
        Ok(adam)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TrainingError> {
        let vocab_meta = |v: &Vocabulary| VocabMeta {
            hash: format!("{:016x}", v.content_hash()),
            tokens: v.tokens().to_vec(),
        };
        let meta = Metadata {
            model_config: self.model_config,
            mode: self.mode,
            src_vocab: vocab_meta(&self.src_vocab),
            tgt_vocab: vocab_meta(&self.tgt_vocab),
            step: self.step,
        };
        let json = serde_json::to_vec(&meta).expect("metadata serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&u32_len(json.len(), "metadata")?.to_le_bytes());
        out.extend_from_slice(&json);
        let all: Vec<&NamedTensor> = self.tensors.iter().chain(&self.optimizer).collect();
        out.extend_from_slice(&u32_len(all.len(), "tensor count")?.to_le_bytes());
        for t in all {
            let name = t.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| TrainingError::CorruptCheckpoint(format!("tensor name too long: {}", t.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            let rank = u8::try_from(t.shape.len())
                .map_err(|_| TrainingError::CorruptCheckpoint(format!("rank too large: {}", t.name)))?;
            out.push(rank);
            for &d in &t.shape {
                out.extend_from_slice(&u32_len(d, "dimension")?.to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainingError> {
        let corrupt = |m: &str| TrainingError::CorruptCheckpoint(m.to_owned());
        if bytes.len() < MAGIC.len() + 8 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let mut r = Reader { bytes, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(TrainingError::CorruptCheckpoint(format!(
                "unsupported format version {version} (this build reads version {FORMAT_VERSION})"
            )));
        }
        let body_end = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if stored != fnv1a64(&bytes[..body_end]) {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let r_bytes = &bytes[..body_end];
        let mut r = Reader { bytes: r_bytes, pos: r.pos };
        let meta_len = r.u32()? as usize;
        let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| TrainingError::CorruptCheckpoint(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut all = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| corrupt("tensor name is not UTF-8"))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| rank > 0 && n > 0)
                .ok_or_else(|| TrainingError::CorruptCheckpoint(format!("tensor `{name}` has invalid shape {shape:?}")))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            all.push(NamedTensor { name, shape, data });
        }
        if r.pos != r_bytes.len() {
            return Err(corrupt("trailing bytes before checksum"));
        }
        let vocab = |v: VocabMeta, which: &str| -> Result<Vocabulary, TrainingError> {
            let mut text = format!("#mode={}\n", meta.mode);
            for t in &v.tokens {
                text.push_str(t);
                text.push('\n');
            }
            let vocab = Vocabulary::read_from(text.as_bytes())
                .map_err(|e| TrainingError::CorruptCheckpoint(format!("{which} vocabulary: {e}")))?;
            if format!("{:016x}", vocab.content_hash()) != v.hash {
                return Err(TrainingError::CorruptCheckpoint(format!("{which} vocabulary hash mismatch")));
            }
            Ok(vocab)
        };
        let src_vocab = vocab(meta.src_vocab.clone(), "source")?;
        let tgt_vocab = vocab(meta.tgt_vocab.clone(), "target")?;
        let n_params = crate::model::parameter_layout(&meta.model_config).len();
        if all.len() < n_params {
            return Err(corrupt("fewer tensors than the model layout requires"));
        }
        let optimizer = all.split_off(n_params);
        let ckpt = Self {
            version,
            model_config: meta.model_config,
            mode: meta.mode,
            src_vocab,
            tgt_vocab,
            tensors: all,
            optimizer,
            step: meta.step,
        };
        let model = ckpt
            .model()
            .map_err(|e| TrainingError::CorruptCheckpoint(format!("parameters: {e}")))?;
        if !ckpt.optimizer.is_empty() {
            ckpt.optimizer_state(&model)?;
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainingError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainingError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn u32_len(n: usize, what: &str) -> Result<u32, TrainingError> {
    u32::try_from(n).map_err(|_| TrainingError::CorruptCheckpoint(format!("{what} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainingError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            TrainingError::CorruptCheckpoint(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TrainingError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TrainingError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TrainingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
