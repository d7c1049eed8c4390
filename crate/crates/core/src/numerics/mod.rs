//! Dense tensors, a reverse-mode tape, Adam, finite-difference checking and
//! parameter checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use params::{ParamBinding, ParamStore};
pub use tape::{broadcast_shape, Binary, CustomOp, Grads, Tape, Unary, Var};
pub use tensor::Tensor;

pub(crate) use tensor::gemm_acc;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: dimension error: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape node {node} references a later node")]
    CyclicTape { node: usize },
    #[error("non-finite gradient for parameter `{name}` (first bad index {index}, value {value})")]
    NonFiniteGradient { name: String, index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
