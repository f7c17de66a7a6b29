//! Reverse-mode automatic differentiation over a small closed op set.
//!
//! Derivative rules append ordinary graph nodes instead of recording numbers
//! on a tape. A gradient is therefore itself a graph and can be differentiated
//! again, which is what training through `∇_h f` requires.

mod adam;
mod grad;
mod graph;
mod kernels;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Env, Graph, Node, NodeId, Op};
pub use params::ParamSet;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input '{0}' is not bound")]
    UnboundInput(String),
    #[error("gradient requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("node {0} does not exist in this graph")]
    UnknownNode(usize),
    #[error("parameter '{0}' defined twice")]
    DuplicateParam(String),
}
