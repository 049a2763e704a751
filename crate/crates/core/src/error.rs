use thiserror::Error;

use crate::complex::ComplexError;
use crate::tensor::TensorError;

/// Errors raised by the model and training pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("graph-conditioned encoder needs an input graph")]
    MissingInputGraph,
    #[error("skeleton sampling needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{what}: expected {expected}, got {got}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training split has no labelled nodes")]
    EmptyTrainMask,
    #[error("non-finite loss at epoch {epoch} (task {task}, graph {graph}, polygon {polygon})")]
    NonFiniteLoss {
        epoch: usize,
        task: f64,
        graph: f64,
        polygon: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
