use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Blank output id. The predictor also uses this row of the embedding table
/// as its start-of-sequence input.
pub const BLANK: u32 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature dimension.
    pub feature_dim: usize,
    pub hidden_dim: usize,
    /// Output vocabulary size, not counting blank. Token ids are `1..=vocab`.
    pub vocab: usize,
    pub embed_dim: usize,
    /// Encoder chunk size in frames.
    pub chunk: usize,
    pub max_symbols_per_frame: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("vocab", self.vocab),
            ("embed_dim", self.embed_dim),
            ("chunk", self.chunk),
            ("max_symbols_per_frame", self.max_symbols_per_frame),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of joint outputs, blank included.
    pub fn outputs(&self) -> usize {
        self.vocab + 1
    }
}

/// One utterance worth of input features, `T × D`, tagged with its language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub language: String,
    pub frames: Tensor,
}

impl FeatureSequence {
    pub fn new(language: impl Into<String>, frames: Tensor) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::InvalidArgument(
                "feature sequence needs at least one frame".into(),
            ));
        }
        Ok(Self {
            language: language.into(),
            frames,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Output label sequence; never contains [`BLANK`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, vocab: usize) -> Result<Self> {
        let seq = Self(tokens);
        seq.validate(vocab)?;
        Ok(seq)
    }

    pub fn validate(&self, vocab: usize) -> Result<()> {
        match self.0.iter().find(|&&t| t == BLANK || t as usize > vocab) {
            Some(&token) => Err(Error::TokenOutOfRange { token, vocab }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// A training or test pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub features: FeatureSequence,
    pub tokens: TokenSequence,
}

impl Utterance {
    pub fn language(&self) -> &str {
        &self.features.language
    }
}
