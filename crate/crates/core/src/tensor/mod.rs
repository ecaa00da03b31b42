//! Dense `f64` tensors with a tape-based reverse-mode differentiator.
//!
//! Parameters live in a [`ParamStore`]; every forward pass records onto a
//! fresh [`Graph`], which copies parameter values in on first use and
//! accumulates adjoints back into the store on [`Graph::backward`].
//! Gradients accumulate until the caller runs [`ParamStore::zero_grads`].

mod checkpoint;
mod gradcheck;
mod graph;
mod store;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{check_gradients, grad_check, GradCheckReport, ParamCheck, REL_ERROR_FLOOR};
pub use graph::{softmax, Elementwise, Graph, Var};
pub(crate) use graph::{log_sum_exp, sigmoid};
pub use store::{ParamId, ParamStore, Tensor};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("softmax over a fully masked row")]
    AllMasked,
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
