//! Streaming neural transducer over frame sequences. The loss sums over every
//! monotone alignment of frames to tokens; decoding is greedy.

mod decode;
pub mod lattice;
pub mod model;
pub mod oracle;
mod train;
mod types;

pub use decode::greedy_decode;
pub use lattice::{transducer_loss, AlphaBeta, LossLattice};
pub use model::TransducerModel;
pub use oracle::{enumerate_alignments, transducer_loss_bruteforce};
pub(crate) use train::train_loop;
pub use train::{train_base, BaseTraining, TrainConfig, TrainingLog, UtteranceFilter};
pub use types::{FeatureSequence, ModelConfig, TokenSequence, Utterance, BLANK};
