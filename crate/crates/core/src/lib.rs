//! Transducer speech models over synthetic multilingual data, with
//! per-language linear input networks and traffic-weighted BLEU evaluation.

mod codec;

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod lin;
pub mod numerics;
pub mod pipeline;
pub mod seed;
pub mod synthlang;
pub mod transducer;

pub use checkpoint::{ArtifactKind, Checkpoint, Metadata};
pub use config::{default_preset, ExperimentConfig};
pub use error::{Error, Result};
pub use eval::{corpus_bleu, evaluate, make_traffic, EvalReport, TrafficDistribution};
pub use lin::{apply_lin, identity_lin, reset_to_identity, train_lin, LinLayer};
pub use numerics::Tensor;
pub use synthlang::{Corpus, Suite};
pub use transducer::{greedy_decode, transducer_loss, ModelConfig, TrainConfig, TransducerModel, Utterance};
