//! Dense tensors with reverse-mode gradients, plus the Adam optimiser and
//! parameter checkpoints.

mod adam;
pub mod checkpoint;
mod graph;
mod params;
mod tensor;


pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use graph::{sigmoid, Elementwise, Gradients, Graph, Var, PROB_FLOOR};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;
