//! Differentiable building blocks for the student networks.
//!
//! Everything runs in `f64` on the CPU with a small tape-based autograd
//! ([`Graph`]). Convolutions are lowered to matrix products.

mod attention;
mod checkpoint;
mod graph;
mod params;
mod scse;
mod student;
mod tensor;
mod unet;

pub use attention::{ContextAttention, ContextAttnSpec};
pub use checkpoint::{
    Checkpoint, CheckpointManifest, OptimizerManifest, OptimizerState, ParamEntry, FORMAT, MANIFEST,
};
pub use graph::{patch_errors, Gradients, Graph, NodeId};
pub use params::{Init, ParamId, ParamStore};
pub use scse::Scse;
pub use student::{Student, StudentSpec};
pub use tensor::Tensor;
pub use unet::{OutActivation, UNet, UNetSpec};
