//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "DESMCKPT" | version u32 | body_len u64 | body_crc u32 | header_crc u32 | body
//! body = meta_len u32 | meta JSON | tensor data as f32, in declared order
//! ```
//!
//! `header_crc` covers the preceding 24 bytes. The meta JSON carries the
//! model config, the character vocabulary, the lexicon fingerprint and the
//! name and shape of every tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelConfig, ModelError};
use crate::vocab::CharVocab;

pub const MAGIC: &[u8; 8] = b"DESMCKPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint checksum mismatch in {0}")]
    Checksum(&'static str),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("tensor {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint was trained against a different lexicon")]
    LexiconMismatch,
    #[error("bad checkpoint metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: CharVocab,
    lexicon_fingerprint: u32,
    lexicon_size: usize,
    tensors: Vec<(String, usize, usize)>,
}

/// A model plus what is needed to reattach it to its data.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: CharVocab,
    pub lexicon_fingerprint: u32,
    pub lexicon_size: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let named = self.model.params.named_tensors();
        let meta = Meta {
            config: self.model.config.clone(),
            vocab: self.vocab.clone(),
            lexicon_fingerprint: self.lexicon_fingerprint,
            lexicon_size: self.lexicon_size,
            tensors: named.iter().map(|(n, t)| (n.clone(), t.rows, t.cols)).collect(),
        };
        let meta_json = serde_json::to_vec(&meta).expect("checkpoint meta serializes");
        let mut body = Vec::new();
        body.extend((meta_json.len() as u32).to_le_bytes());
        body.extend(&meta_json);
        for (_, t) in &named {
            for &x in &t.data {
                body.extend((x as f32).to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend((body.len() as u64).to_le_bytes());
        out.extend(crc32fast::hash(&body).to_le_bytes());
        let header_crc = crc32fast::hash(&out);
        out.extend(header_crc.to_le_bytes());
        out.extend(body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < HEADER_LEN {
            return Err(if bytes.starts_with(MAGIC) { CheckpointError::Truncated } else { CheckpointError::BadMagic });
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if crc32fast::hash(&bytes[..24]) != u32_at(24) {
            return Err(CheckpointError::Checksum("header"));
        }
        let version = u32_at(8);
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let body_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != body_len {
            return Err(CheckpointError::Truncated);
        }
        if crc32fast::hash(body) != u32_at(20) {
            return Err(CheckpointError::Checksum("body"));
        }
        if body.len() < 4 {
            return Err(CheckpointError::Truncated);
        }
        let meta_len = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
        let meta_bytes = body.get(4..4 + meta_len).ok_or(CheckpointError::Truncated)?;
        let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| CheckpointError::Meta(e.to_string()))?;
        if meta.vocab.len() != meta.config.char_vocab_size {
            return Err(CheckpointError::Meta("vocabulary size disagrees with config".into()));
        }
        let mut model = Model::new(meta.config)?;
        let mut data = &body[4 + meta_len..];
        let names: Vec<String> = model.params.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != meta.tensors.len() {
            return Err(CheckpointError::Meta(format!(
                "expected {} tensors, found {}",
                names.len(),
                meta.tensors.len()
            )));
        }
        for ((name, t), (stored, rows, cols)) in names.into_iter().zip(model.params.tensors_mut()).zip(meta.tensors) {
            if name != stored || (rows, cols) != (t.rows, t.cols) {
                return Err(CheckpointError::ShapeMismatch {
                    name: stored,
                    expected: (t.rows, t.cols),
                    found: (rows, cols),
                });
            }
            let need = t.data.len() * 4;
            if data.len() < need {
                return Err(CheckpointError::Truncated);
            }
            for (x, b) in t.data.iter_mut().zip(data[..need].chunks_exact(4)) {
                *x = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            }
            data = &data[need..];
        }
        if !data.is_empty() {
            return Err(CheckpointError::Meta("trailing bytes after tensors".into()));
        }
        Ok(Self {
            model,
            vocab: meta.vocab,
            lexicon_fingerprint: meta.lexicon_fingerprint,
            lexicon_size: meta.lexicon_size,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            char_vocab_size: 5,
            word_vocab_size: 4,
            d_c: 8,
            d_w: 4,
            layers: 1,
            heads: 2,
            d_ff: 8,
            d_g: 4,
            max_len: 6,
            seed: 3,
            ..Default::default()
        };
        Checkpoint {
            model: Model::new(config).unwrap(),
            vocab: CharVocab::from_chars("参加禅".chars()),
            lexicon_fingerprint: 7,
            lexicon_size: 2,
        }
    }

    #[test]
    fn round_trip_within_f32() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.model.config, c.model.config);
        assert_eq!(back.vocab, c.vocab);
        for ((_, a), (_, b)) in c.model.params.named_tensors().iter().zip(back.model.params.named_tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*y, *x as f32 as f64);
            }
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut v = bytes.clone();
        v[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v), Err(CheckpointError::Checksum("header"))));
        let mut v = bytes.clone();
        *v.last_mut().unwrap() ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&v), Err(CheckpointError::Checksum("body"))));
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..40]), Err(CheckpointError::Truncated)));
    }

    #[test]
    fn rejects_version_and_shape() {
        let mut v = sample().to_bytes();
        v[8..12].copy_from_slice(&2u32.to_le_bytes());
        let crc = crc32fast::hash(&v[..24]);
        v[24..28].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&v), Err(CheckpointError::UnsupportedVersion(2))));

        let mut c = sample();
        c.model.params.w_attn = crate::model::tensor::Tensor::zeros(3, 3);
        assert!(matches!(
            Checkpoint::from_bytes(&c.to_bytes()),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }
}
