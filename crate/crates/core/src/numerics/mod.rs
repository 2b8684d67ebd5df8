//! Dense tensors, reverse-mode autodiff, Adam and the Noam schedule.

mod gradcheck;
mod graph;
mod optim;
mod params;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions};
pub use graph::{Graph, Var};
pub use optim::{Adam, AdamConfig, NoamSchedule};
pub use params::{Gradients, Param, ParamSet};
pub use tensor::{logsumexp, Tensor};
