//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ASTR"  u32 version  u32 header_len  header JSON  tensor payload  u32 crc
//! ```
//!
//! The header carries the training config, vocabulary, tag set, RNG state,
//! best dev F1 and a tensor manifest (name, shape, element offset/count into
//! the payload). The payload is raw f64 bytes in manifest order. The CRC-32
//! covers every byte before it. Serialization is deterministic, so
//! save → load → save reproduces the file byte for byte.

use crate::data::{TagSet, Vocab};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"ASTR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Element (not byte) offset into the payload.
    offset: usize,
    /// Element count.
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    vocab: Vocab,
    tagset: TagSet,
    rng_state: [u64; 4],
    best_dev_f1: f64,
    tensors: Vec<TensorManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub tagset: TagSet,
    pub rng_state: [u64; 4],
    pub best_dev_f1: f64,
    /// `(scoped name, values)` in model visit order.
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(
        model: &mut Model,
        config: TrainConfig,
        rng_state: [u64; 4],
        best_dev_f1: f64,
    ) -> Checkpoint {
        Checkpoint {
            config,
            vocab: model.vocab.clone(),
            tagset: model.tagset.clone(),
            rng_state,
            best_dev_f1,
            tensors: model.param_values(),
        }
    }

    /// Rebuild a model carrying exactly the stored parameters.
    pub fn build_model(&self) -> Result<Model> {
        let mut model = Model::new(
            self.config.model.clone(),
            self.vocab.clone(),
            self.tagset.clone(),
            None,
            &mut Rng::new(0),
        )?;
        model.load_param_values(&self.tensors)?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = Vec::with_capacity(self.tensors.len());
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            manifest.push(TensorManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
                len: t.len(),
            });
            offset += t.len();
        }
        let header = Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            tagset: self.tagset.clone(),
            rng_state: self.rng_state,
            best_dev_f1: self.best_dev_f1,
            tensors: manifest,
        };
        let header_json = serde_json::to_vec(&header)?;

        let mut bytes = Vec::with_capacity(16 + header_json.len() + offset * 8);
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 16 {
            return Err(Error::CheckpointFormat("file shorter than the fixed prelude".into()));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::CheckpointFormat("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32(&bytes[..bytes.len() - 4]);
        if stored_crc != computed {
            return Err(Error::CheckpointChecksum {
                stored: stored_crc,
                computed,
            });
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .ok_or_else(|| Error::CheckpointFormat("header length overflow".into()))?;
        if header_end > bytes.len() - 4 {
            return Err(Error::CheckpointFormat("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| Error::CheckpointFormat(format!("header json: {e}")))?;

        let payload = &bytes[header_end..bytes.len() - 4];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let start = entry.offset * 8;
            let end = start + entry.len * 8;
            if end > payload.len() {
                return Err(Error::CheckpointFormat(format!(
                    "tensor {} extends past the payload",
                    entry.name
                )));
            }
            let mut data = Vec::with_capacity(entry.len);
            for chunk in payload[start..end].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            let t = Tensor::from_vec(&entry.shape, data)
                .map_err(|e| Error::CheckpointFormat(format!("tensor {}: {e}", entry.name)))?;
            tensors.push((entry.name.clone(), t));
        }
        Ok(Checkpoint {
            config: header.config,
            vocab: header.vocab,
            tagset: header.tagset,
            rng_state: header.rng_state,
            best_dev_f1: header.best_dev_f1,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes()?)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

/// CRC-32 (IEEE 802.3 polynomial, reflected), bitwise implementation.
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_known_vector() {
        // "123456789" is the standard check input for CRC-32/IEEE
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }
}
