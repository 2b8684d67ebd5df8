//! Linear input networks: one bias-free `D × D` transform per language,
//! placed in front of a frozen base model.
//!
//! A layer starts as the identity, so the adapted model initially equals the
//! base model exactly, and resetting a trained layer to the identity restores
//! the base model's outputs bit for bit. At inference time every utterance,
//! whatever its language, passes through the one selected layer.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{ArtifactKind, Checkpoint, Metadata};
use crate::error::{Error, Result};
use crate::numerics::{tensor, ParamSet, Tensor};
use crate::seed;
use crate::transducer::model::utterance_loss_graph;
use crate::transducer::{train_loop, FeatureSequence, TrainConfig, TrainingLog, Utterance};

pub const IDENTITY: &str = "identity";
pub const LIN_WEIGHT: &str = "lin.weight";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinLayer {
    /// Language the layer was trained for, or [`IDENTITY`].
    pub language: String,
    weight: Tensor,
}

impl LinLayer {
    pub fn new(language: impl Into<String>, weight: Tensor) -> Result<Self> {
        if weight.rows() != weight.cols() || weight.rows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "LIN weight must be square and non-empty, got {:?}",
                weight.shape()
            )));
        }
        Ok(Self {
            language: language.into(),
            weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn is_identity(&self) -> bool {
        self.weight == Tensor::identity(self.dim())
    }

    /// Label used in reports: `identity` for an identity weight, else
    /// `<language>:<first 12 hex digits of the weight hash>`.
    pub fn label(&self) -> String {
        if self.is_identity() {
            return IDENTITY.to_string();
        }
        let digest = hex::encode(Sha256::digest(self.weight.to_le_bytes()));
        format!("{}:{}", self.language, &digest[..12])
    }

    /// LIN artifact: one tensor `lin.weight` plus language and base hash.
    pub fn to_checkpoint(&self, base_hash: &str, seed: u64, steps: u64) -> Checkpoint {
        let meta = Metadata {
            kind: ArtifactKind::Lin,
            model_config: None,
            seed,
            steps,
            language: Some(self.language.clone()),
            base_hash: Some(base_hash.to_string()),
        };
        Checkpoint::new(meta, [(LIN_WEIGHT.to_string(), self.weight.clone())])
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.kind != ArtifactKind::Lin {
            return Err(Error::Format {
                kind: "lin",
                reason: "checkpoint is not a LIN artifact".into(),
            });
        }
        let weight = ck.tensor(LIN_WEIGHT).ok_or_else(|| Error::Format {
            kind: "lin",
            reason: format!("missing `{LIN_WEIGHT}`"),
        })?;
        let language = ck.meta.language.clone().unwrap_or_else(|| IDENTITY.to_string());
        Self::new(language, weight.clone())
    }
}

pub fn identity_lin(dim: usize) -> Result<LinLayer> {
    if dim == 0 {
        return Err(Error::InvalidArgument("LIN dimension must be >= 1".into()));
    }
    LinLayer::new(IDENTITY, Tensor::identity(dim))
}

/// Replaces every frame `x` by `W x`.
pub fn apply_lin(lin: &LinLayer, feats: &FeatureSequence) -> Result<FeatureSequence> {
    if feats.dim() != lin.dim() {
        return Err(Error::DimensionMismatch {
            what: "LIN input dim",
            expected: lin.dim(),
            actual: feats.dim(),
        });
    }
    let frames = tensor::matmul(&feats.frames, &tensor::transpose(&lin.weight));
    Ok(FeatureSequence {
        language: feats.language.clone(),
        frames,
    })
}

pub fn reset_to_identity(lin: &LinLayer) -> LinLayer {
    LinLayer {
        language: IDENTITY.to_string(),
        weight: Tensor::identity(lin.dim()),
    }
}

#[derive(Clone, Debug)]
pub struct LinTraining {
    pub lin: LinLayer,
    pub log: TrainingLog,
}

/// Trains a LIN for the single language in `corpus` against the frozen base
/// model. Only `lin.weight` is updated; the base parameters are hashed before
/// and after and any difference aborts.
pub fn train_lin(base: &Checkpoint, corpus: &[Utterance], cfg: &TrainConfig, seed: u64) -> Result<LinTraining> {
    let Some(first) = corpus.first() else {
        return Err(Error::EmptyCorpus);
    };
    let language = first.language().to_string();
    let mut others: Vec<String> = corpus
        .iter()
        .map(|u| u.language().to_string())
        .filter(|l| *l != language)
        .collect();
    if !others.is_empty() {
        others.sort();
        others.dedup();
        others.insert(0, language);
        return Err(Error::MixedLanguages(others));
    }

    let hash_before = base.param_hash()?;
    let model = base.model()?;
    let mcfg = *model.config();
    for utt in corpus {
        if utt.features.dim() != mcfg.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "feature dim",
                expected: mcfg.feature_dim,
                actual: utt.features.dim(),
            });
        }
        utt.tokens.validate(mcfg.vocab)?;
    }
    let frozen = model.params().frozen();
    let frozen_digest = frozen.digest();

    let mut lin_params = ParamSet::new();
    lin_params.insert(LIN_WEIGHT, Tensor::identity(mcfg.feature_dim), true);
    let data: Vec<&Utterance> = corpus.iter().collect();
    let log = train_loop(
        &mut lin_params,
        &data,
        cfg,
        seed::derive(seed, "lin-order", 0),
        |g, params, utt| {
            let x = g.constant(utt.features.frames.clone());
            let w = g.param(params, LIN_WEIGHT)?;
            let wt = g.transpose(w);
            let adapted = g.matmul(x, wt);
            utterance_loss_graph(g, &frozen, &mcfg, adapted, utt.tokens.as_slice())
        },
    )?;

    let hash_after = base.param_hash()?;
    if hash_after != hash_before || frozen.digest() != frozen_digest {
        return Err(Error::HashMismatch {
            what: "frozen base parameters".into(),
            stored: hash_before,
            computed: hash_after,
        });
    }
    let weight = lin_params.value(LIN_WEIGHT)?.map(|v| v as f32 as f64);
    Ok(LinTraining {
        lin: LinLayer::new(language, weight)?,
        log,
    })
}

/// True iff every non-LIN tensor of `after` is byte-identical to `before`.
pub fn verify_base_frozen(before: &Checkpoint, after: &Checkpoint) -> bool {
    let base = |ck: &Checkpoint| -> Vec<(String, Vec<u8>)> {
        ck.tensors()
            .filter(|(n, _)| !n.starts_with("lin."))
            .map(|(n, t)| (n.to_string(), t.to_le_bytes()))
            .collect()
    };
    base(before) == base(after)
}
