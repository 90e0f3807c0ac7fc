//! A small dense-tensor network library: convolution, fully connected,
//! ReLU and softmax layers, reverse-mode gradients, SGD and Adam, and a
//! versioned binary checkpoint format.

mod checkpoint;
mod gemm;
mod network;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, MAGIC, VERSION};
pub use network::{
    default_actor_critic_spec, default_dueling_spec, default_trunk, Activation, Forward, HeadSpec, Init, LayerSpec, Network,
    NetworkSpec, Params,
};
pub use optim::{apply_update, apply_update_in_place, OptimizerRule, OptimizerState};
pub use tensor::Tensor;

use thiserror::Error;

/// Floating-point type of every tensor.
pub type Real = f64;

/// Per-parameter gradients, shape-congruent with [`Params`].
pub type Gradients = Params;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint spec does not match the expected network")]
    SpecMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod gradcheck;
