//! State-space sequence machinery: time-invariant SSMs in recurrent and
//! convolutional form, the selective scan, and Mamba blocks.

mod lti;
mod mamba;
mod scan;
mod selective;

pub use lti::{
    conv_apply, direct_causal_conv, discretize_zoh, fft_causal_conv, zoh_scalar, DiscreteSsm, LtiSsm,
    DIRECT_CONV_MAX_LEN,
};
pub use mamba::{BlockState, MambaBlock, MambaConfig, MambaStack, STACK_DEPTH};
pub use scan::{
    associative_scan, causal_conv_forward, causal_conv_on_tape, combine, selective_scan_backward,
    selective_scan_forward, selective_scan_on_tape, ScanDims, ScanMode, ScanOperands,
};
pub use selective::{inverse_softplus, SelectiveSsm};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum SsmError {
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("state entry {0} is not stable (must be ≤ 0)")]
    Unstable(f64),
    #[error("discretisation left |Ā| ≥ 1 (Δ = {delta}, a = {a})")]
    UnstableDiscretization { delta: f64, a: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("operand {name}: expected {expected} values, got {got}")]
    Operand { name: &'static str, expected: usize, got: usize },
    #[error("width mismatch: expected {expected}, got {got}")]
    Width { expected: usize, got: usize },
    #[error("a Mamba stack holds exactly {STACK_DEPTH} blocks, got {0}")]
    BlockCount(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
