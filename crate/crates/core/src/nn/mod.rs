//! Minimal reverse-mode differentiation and the layers built on it.

mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_primitive, random_tensor, Primitive, DEFAULT_EPS};
pub use graph::{Graph, Var};
pub use layers::{AttentionOutput, Conv2d, Dense, LstmCell, LstmState, MultiHeadAttention};
pub use params::{glorot_bound, AdamConfig, ParamId, ParameterSet, SgdConfig};
pub use tensor::Tensor;
