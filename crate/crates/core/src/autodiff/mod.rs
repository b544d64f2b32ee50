//! Minimal reverse-mode automatic differentiation over dense `f64` arrays,
//! plus the MLP building block, Adam and the checkpoint container.

mod adam;
mod array;
mod checkpoint;
mod graph;
mod mlp;
mod params;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use array::Array;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint_meta, save_checkpoint, CheckpointError,
    CheckpointMeta, FORMAT_VERSION, MAGIC,
};
pub use graph::{gaussian_log_density, log_sum_exp, stable_softplus, Gradients, Graph, Var};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use params::{ParamId, ParamStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("backward requires a scalar output, node {node} has shape {shape:?}")]
    NotScalar { node: usize, shape: Vec<usize> },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
}

#[cfg(test)]
mod tests;
