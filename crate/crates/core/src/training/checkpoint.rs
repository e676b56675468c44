//! Self-contained model files.
//!
//! Layout: `b"MATR"`, format version (u32 LE), header length (u32 LE), UTF-8
//! JSON header, then every tensor as little-endian f32 in manifest order.
//! The header carries a CRC-32 of the tensor bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrainMode;
use crate::corpus::Vocabulary;
use crate::model::{ModelConfig, ModelParams, Weights};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MATR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found}; this build reads version {expected}")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error("tensor data checksum {found:08x} does not match the header's {expected:08x}; the file is corrupted")]
    Checksum { expected: u32, found: u32 },
    #[error("checkpoint inconsistent: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    /// `None` for an untrained model.
    pub mode: Option<TrainMode>,
    pub steps: u64,
    pub final_loss: Option<f64>,
}

/// Trained weights with everything needed to run them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab: Vocabulary,
    pub metadata: TrainMetadata,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
    metadata: TrainMetadata,
    data_crc32: u32,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, vocab: Vocabulary, metadata: TrainMetadata) -> Result<Self, CheckpointError> {
        if vocab.len() != params.config.vocab_size {
            return Err(CheckpointError::Mismatch(format!(
                "vocabulary has {} tokens but the model expects {}",
                vocab.len(),
                params.config.vocab_size
            )));
        }
        Ok(Self { params, vocab, metadata })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), CheckpointError> {
        let named = self.params.weights.named();
        let data: Vec<u8> = named.iter().flat_map(|(_, t)| t.data().iter().flat_map(|v| v.to_le_bytes())).collect();
        let header = Header {
            config: self.params.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            metadata: self.metadata.clone(),
            data_crc32: crc32fast::hash(&data),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| CheckpointError::Header("header exceeds 4 GiB".into()))?;
        out.write_all(&CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&json)?;
        out.write_all(&data)?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let take = |at: usize, n: usize, what: &str| {
            bytes
                .get(at..at + n)
                .ok_or_else(|| CheckpointError::Truncated(format!("{what} needs bytes {at}..{}, file has {}", at + n, bytes.len())))
        };
        let magic: [u8; 4] = take(0, 4, "magic")?.try_into().unwrap();
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = u32::from_le_bytes(take(4, 4, "version")?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = u32::from_le_bytes(take(8, 4, "header length")?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(12, len, "header")?).map_err(|e| CheckpointError::Header(e.to_string()))?;

        header.config.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
        let vocab = Vocabulary::from_tokens(header.vocab).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let expected = header.config.parameter_shapes();
        if expected.len() != header.tensors.len() {
            return Err(CheckpointError::Mismatch(format!(
                "config implies {} tensors, manifest lists {}",
                expected.len(),
                header.tensors.len()
            )));
        }
        for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(CheckpointError::Mismatch(format!(
                    "manifest entry {} {:?} does not match config tensor {name} {shape:?}",
                    entry.name, entry.shape
                )));
            }
        }

        let start = 12 + len;
        let mut offset = start;
        let mut tensors = Vec::with_capacity(expected.len());
        for (name, shape) in &expected {
            let count: usize = shape.iter().product();
            let raw = take(offset, count * 4, name)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor::new(shape.clone(), data).map_err(|e| CheckpointError::Header(e.to_string()))?);
            offset += count * 4;
        }
        if offset != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - offset));
        }
        let found = crc32fast::hash(&bytes[start..]);
        if found != header.data_crc32 {
            return Err(CheckpointError::Checksum {
                expected: header.data_crc32,
                found,
            });
        }
        let weights = Weights::shapes(&header.config).from_leaves(&tensors);
        Self::new(
            ModelParams {
                config: header.config,
                weights,
            },
            vocab,
            header.metadata,
        )
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    checkpoint.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    fn sample() -> Checkpoint {
        let vocab = Vocabulary::from_chars("ABक".chars());
        let params = init_model(&ModelConfig::toy(vocab.len()), 5).unwrap();
        Checkpoint::new(params, vocab, TrainMetadata::default()).unwrap()
    }

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut out = Vec::new();
        c.write_to(&mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&bytes(&c)).unwrap(), c);
    }

    #[test]
    fn corruptions_are_rejected() {
        let good = bytes(&sample());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        let err = Checkpoint::from_bytes(&bad).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
        assert!(matches!(
            Checkpoint::from_bytes(&good[..good.len() - 1]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::TrailingBytes(1))));
        let mut flipped = good.clone();
        let last = flipped.len() - 2;
        flipped[last] ^= 0x10;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(CheckpointError::Checksum { .. })));
    }

    #[test]
    fn vocabulary_must_match_config() {
        let c = sample();
        let other = Vocabulary::from_chars("AB".chars());
        assert!(Checkpoint::new(c.params, other, TrainMetadata::default()).is_err());
    }
}
