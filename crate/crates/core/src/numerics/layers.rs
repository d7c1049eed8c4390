//! Small helpers shared by the network code: affine maps on and off the tape
//! and uniform initialisation.

use rand::Rng;

use super::{NumericsError, Tape, Tensor, Var};

/// `x · w (+ b)` on the tape; `x: [rows, in]`, `w: [in, out]`, `b: [out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Option<Var>) -> Result<Var, NumericsError> {
    let y = tape.matmul(x, w)?;
    match b {
        Some(b) => tape.add(y, b),
        None => Ok(y),
    }
}

/// `out = x · w (+ b)` for a single row, without recording anything.
pub fn linear_row(x: &[f64], w: &Tensor, b: Option<&Tensor>) -> Vec<f64> {
    let cols = w.cols();
    let mut out = match b {
        Some(b) => b.data().to_vec(),
        None => vec![0.0; cols],
    };
    super::gemm_acc(x, w.data(), &mut out, 1, x.len(), cols);
    out
}

/// Row-major batch version of [`linear_row`]: `x` holds `rows` inputs.
pub fn linear_rows(x: &[f64], rows: usize, w: &Tensor, b: Option<&Tensor>) -> Vec<f64> {
    let cols = w.cols();
    let mut out = match b {
        Some(b) => b.data().repeat(rows),
        None => vec![0.0; rows * cols],
    };
    super::gemm_acc(x, w.data(), &mut out, rows, w.rows(), cols);
    out
}

/// Uniform in `[−bound, bound]`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// PyTorch-style default for a `[fan_in, fan_out]` weight.
pub fn fan_in_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, &[fan_in, fan_out], 1.0 / (fan_in.max(1) as f64).sqrt())
}

pub fn sigmoid(x: f64) -> f64 {
    super::Unary::Sigmoid.apply(x)
}

pub fn silu(x: f64) -> f64 {
    super::Unary::Silu.apply(x)
}

pub fn softplus(x: f64) -> f64 {
    super::Unary::Softplus.apply(x)
}
