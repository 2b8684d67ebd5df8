//! Experiment configuration: one TOML document fixes every generated byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::parse_traffic;
use crate::synthlang::{LengthSpec, Suite};
use crate::transducer::{ModelConfig, TrainConfig, UtteranceFilter};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub languages: Vec<String>,
    pub dim: usize,
    pub vocab: usize,
    pub noise: f64,
    pub tokens: (usize, usize),
    pub frames_per_token: (usize, usize),
    pub train_per_language: usize,
    pub test_per_language: usize,
}

/// Architecture knobs; feature dimension and vocabulary come from the suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub chunk: usize,
    pub max_symbols_per_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinSection {
    /// Languages that get a LIN in a full experiment run.
    pub designated: Vec<String>,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub suite: SuiteConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub filter: UtteranceFilter,
    pub lin: LinSection,
    /// Scenario names such as `uniform` or `p99-L2`.
    pub traffic: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            feature_dim: self.suite.dim,
            hidden_dim: self.model.hidden_dim,
            vocab: self.suite.vocab,
            embed_dim: self.model.embed_dim,
            chunk: self.model.chunk,
            max_symbols_per_frame: self.model.max_symbols_per_frame,
        }
    }

    pub fn lengths(&self) -> LengthSpec {
        LengthSpec {
            tokens: self.suite.tokens,
            frames_per_token: self.suite.frames_per_token,
        }
    }

    pub fn build_suite(&self) -> Result<Suite> {
        Suite::new(
            &self.suite.languages,
            self.suite.dim,
            self.suite.vocab,
            self.suite.noise,
            self.lengths(),
            crate::seed::derive(self.seed, "suite", 0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.suite;
        if s.languages.is_empty() {
            return Err(Error::Config("suite.languages is empty".into()));
        }
        if s.train_per_language == 0 || s.test_per_language == 0 {
            return Err(Error::Config("per-language utterance counts must be >= 1".into()));
        }
        self.model_config().validate()?;
        self.train.validate()?;
        self.lin.train.validate()?;
        for l in &self.lin.designated {
            if !s.languages.contains(l) {
                return Err(Error::Config(format!(
                    "designated LIN language `{l}` is not in the suite"
                )));
            }
        }
        for t in &self.traffic {
            parse_traffic(t, &s.languages)?;
        }
        Ok(())
    }
}

/// The default synthetic preset: six languages, `D = V = 16`.
pub fn default_preset() -> ExperimentConfig {
    ExperimentConfig::from_toml(DEFAULT_TOML).expect("built-in preset is valid")
}

pub const DEFAULT_TOML: &str = include_str!("../../../configs/default.toml");
