//! Checkpoint container shared by base models and linear input networks.
//!
//! Layout, little-endian:
//!
//! ```text
//! "SLCK" | version u32 | meta_len u32 | meta JSON
//! | tensor_count u32 | { name_len u32, name, rank u32, dims u32 × rank, f32 × Π dims } ...
//! | SHA-256 of the tensor table (32 bytes)
//! ```
//!
//! Tensors are `f64` in memory and `f32` on disk. A [`Checkpoint`] rounds its
//! tensors to `f32` when built, so the in-memory value is already what a
//! save/load roundtrip produces.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{put_u32, Cursor};
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};
use crate::transducer::{ModelConfig, TransducerModel};

const MAGIC: &[u8; 4] = b"SLCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const KIND: &str = "checkpoint";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Model,
    Lin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ArtifactKind,
    /// Present for [`ArtifactKind::Model`].
    pub model_config: Option<ModelConfig>,
    pub seed: u64,
    pub steps: u64,
    /// Present for [`ArtifactKind::Lin`].
    pub language: Option<String>,
    /// Parameter hash of the base model a LIN was trained against.
    pub base_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Metadata,
    tensors: IndexMap<String, Tensor>,
}

fn narrow(t: &Tensor) -> Tensor {
    t.map(|v| v as f32 as f64)
}

impl Checkpoint {
    pub fn new(meta: Metadata, tensors: impl IntoIterator<Item = (String, Tensor)>) -> Self {
        let tensors = tensors.into_iter().map(|(n, t)| (n, narrow(&t))).collect();
        Self { meta, tensors }
    }

    pub fn from_model(model: &TransducerModel, seed: u64, steps: u64) -> Self {
        let meta = Metadata {
            kind: ArtifactKind::Model,
            model_config: Some(*model.config()),
            seed,
            steps,
            language: None,
            base_hash: None,
        };
        Self::new(
            meta,
            model.params().iter().map(|(n, p)| (n.to_string(), p.value.clone())),
        )
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        match (self.meta.kind, self.meta.model_config) {
            (ArtifactKind::Model, Some(cfg)) => Ok(cfg),
            _ => Err(Error::Format {
                kind: KIND,
                reason: "not a model checkpoint".into(),
            }),
        }
    }

    /// Rebuilds the model; every parameter is marked trainable.
    pub fn model(&self) -> Result<TransducerModel> {
        let cfg = self.model_config()?;
        let mut params = ParamSet::new();
        for (name, t) in &self.tensors {
            params.insert(name.clone(), t.clone(), true);
        }
        TransducerModel::from_params(cfg, params)
    }

    fn tensor_table(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        put_u32(KIND, &mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(KIND, &mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(KIND, &mut out, 2)?;
            put_u32(KIND, &mut out, t.rows())?;
            put_u32(KIND, &mut out, t.cols())?;
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Hex SHA-256 of the serialized tensor table.
    pub fn param_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.tensor_table()?)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let table = self.tensor_table()?;
        let mut out = Vec::with_capacity(meta.len() + table.len() + 48);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u32(KIND, &mut out, meta.len())?;
        out.extend_from_slice(&meta);
        out.extend_from_slice(&table);
        out.extend_from_slice(&Sha256::digest(&table));
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(buf, KIND);
        if c.take(4)? != MAGIC {
            return Err(Error::Format {
                kind: KIND,
                reason: "bad magic".into(),
            });
        }
        let version = c.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                kind: KIND,
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta_len = c.u32()? as usize;
        let meta: Metadata = serde_json::from_slice(c.take(meta_len)?).map_err(|e| Error::Format {
            kind: KIND,
            reason: format!("metadata: {e}"),
        })?;

        let table_start = c.position();
        let count = c.u32()? as usize;
        let mut tensors = IndexMap::new();
        for _ in 0..count {
            let name = c.string()?;
            let rank = c.u32()?;
            let (rows, cols) = match rank {
                0 => (1, 1),
                1 => (1, c.u32()? as usize),
                2 => (c.u32()? as usize, c.u32()? as usize),
                r => {
                    return Err(Error::Format {
                        kind: KIND,
                        reason: format!("tensor `{name}` has unsupported rank {r}"),
                    })
                }
            };
            let mut data = Vec::with_capacity((rows * cols).min(1 << 24));
            for _ in 0..rows * cols {
                data.push(c.f32()? as f64);
            }
            if tensors
                .insert(name.clone(), Tensor::from_vec(rows, cols, data))
                .is_some()
            {
                return Err(Error::Format {
                    kind: KIND,
                    reason: format!("duplicate tensor `{name}`"),
                });
            }
        }
        let table = &buf[table_start..c.position()];
        let stored = c.take(32)?;
        if !c.done() {
            return Err(Error::Format {
                kind: KIND,
                reason: "trailing bytes".into(),
            });
        }
        let computed = Sha256::digest(table);
        if computed.as_slice() != stored {
            return Err(Error::HashMismatch {
                what: "checkpoint parameters".into(),
                stored: hex::encode(stored),
                computed: hex::encode(computed),
            });
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TransducerModel {
        TransducerModel::init(
            ModelConfig {
                feature_dim: 4,
                hidden_dim: 6,
                vocab: 3,
                embed_dim: 2,
                chunk: 2,
                max_symbols_per_frame: 2,
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let ck = Checkpoint::from_model(&model(), 11, 0);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        for ((_, a), (_, b)) in ck.tensors().zip(back.tensors()) {
            assert_eq!(a.to_le_bytes(), b.to_le_bytes());
        }
    }

    #[test]
    fn flipped_payload_byte_fails_hash() {
        let bytes = Checkpoint::from_model(&model(), 11, 0).to_bytes().unwrap();
        let mut bad = bytes.clone();
        let i = bytes.len() - 40; // inside the last tensor payload
        bad[i] ^= 0x01;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::HashMismatch { .. })));
    }

    #[test]
    fn truncation_and_version_are_rejected() {
        let bytes = Checkpoint::from_model(&model(), 11, 0).to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 5]),
            Err(Error::Format { .. })
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn model_rebuilds_from_checkpoint() {
        let m = model();
        let ck = Checkpoint::from_model(&m, 11, 0);
        let back = ck.model().unwrap();
        assert_eq!(back.config(), m.config());
        let w = back.params().value("encoder.w1").unwrap();
        assert_eq!(
            w.get(0, 0),
            m.params().value("encoder.w1").unwrap().get(0, 0) as f32 as f64
        );
    }
}
