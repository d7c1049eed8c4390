//! Selective-scan and depthwise causal convolution kernels, with their tape
//! backward rules.
//!
//! Row-major layout throughout: a `(batch, len, width)` sequence is a
//! `[batch·len, width]` matrix whose rows for one batch element are
//! contiguous and in time order.

use crate::numerics::{CustomOp, NumericsError, Tape, Tensor, Var};

use super::SsmError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScanMode {
    /// Plain left-to-right recurrence.
    #[default]
    Sequential,
    /// Prefix scan under the first-order-recurrence monoid.
    Associative,
}

/// Composition of two affine maps `h ↦ a h + b`, applying `first` then `second`.
#[inline]
pub fn combine(first: (f64, f64), second: (f64, f64)) -> (f64, f64) {
    (second.0 * first.0, second.0 * first.1 + second.1)
}

/// In-place inclusive scan of `(a_t, b_t)` pairs with [`combine`]
/// (Hillis–Steele doubling). Afterwards `pairs[t].1` is `h_t` for `h_{−1} = 0`.
pub fn associative_scan(pairs: &mut [(f64, f64)]) {
    let n = pairs.len();
    let mut offset = 1;
    while offset < n {
        for i in (offset..n).rev() {
            pairs[i] = combine(pairs[i - offset], pairs[i]);
        }
        offset *= 2;
    }
}

/// Shapes for one selective-scan call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanDims {
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
    pub state: usize,
}

impl ScanDims {
    pub fn rows(&self) -> usize {
        self.batch * self.len
    }
}

/// Borrowed operands of the selective scan.
///
/// * `u`, `delta`: `[rows, channels]`
/// * `a`: `[channels, state]`, realised (negative) diagonal
/// * `b`, `c`: `[rows, state]`
/// * `d`: `[channels]`
pub struct ScanOperands<'a> {
    pub u: &'a [f64],
    pub delta: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub c: &'a [f64],
    pub d: &'a [f64],
}

fn check(dims: ScanDims, ops: &ScanOperands) -> Result<(), SsmError> {
    let rows = dims.rows();
    let want = [
        ("u", ops.u.len(), rows * dims.channels),
        ("delta", ops.delta.len(), rows * dims.channels),
        ("A", ops.a.len(), dims.channels * dims.state),
        ("B", ops.b.len(), rows * dims.state),
        ("C", ops.c.len(), rows * dims.state),
        ("D", ops.d.len(), dims.channels),
    ];
    for (name, got, expected) in want {
        if got != expected {
            return Err(SsmError::Operand { name, expected, got });
        }
    }
    Ok(())
}

/// Runs the scan. Returns `y` (`[rows, channels]`) and every hidden state
/// (`[rows, channels, state]`), which the backward pass reuses.
///
/// Discretisation: `Ā = exp(Δ A)` (zero-order hold), `B̄ = Δ B` (Euler).
pub fn selective_scan_forward(
    dims: ScanDims,
    ops: &ScanOperands,
    mode: ScanMode,
) -> Result<(Vec<f64>, Vec<f64>), SsmError> {
    let (y, states, _) = scan_forward_cached(dims, ops, mode)?;
    Ok((y, states))
}

/// Forward scan that also returns `Ā` per `(row, channel, state)`, laid out
/// like the hidden states, so the backward pass need not recompute it.
fn scan_forward_cached(
    dims: ScanDims,
    ops: &ScanOperands,
    mode: ScanMode,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), SsmError> {
    check(dims, ops)?;
    let ScanDims { batch, len, channels: dc, state: ns } = dims;
    let mut y = vec![0.0; dims.rows() * dc];
    let mut states = vec![0.0; dims.rows() * dc * ns];
    let mut abars = vec![0.0; dims.rows() * dc * ns];
    let mut pairs = vec![(0.0, 0.0); len];
    for bi in 0..batch {
        for d in 0..dc {
            let arow = &ops.a[d * ns..(d + 1) * ns];
            for n in 0..ns {
                for t in 0..len {
                    let row = bi * len + t;
                    let dt = ops.delta[row * dc + d];
                    let abar = (dt * arow[n]).exp();
                    if !(abar < 1.0 && dt > 0.0) {
                        return Err(SsmError::UnstableDiscretization { delta: dt, a: arow[n] });
                    }
                    abars[(row * dc + d) * ns + n] = abar;
                    pairs[t] = (abar, dt * ops.b[row * ns + n] * ops.u[row * dc + d]);
                }
                match mode {
                    ScanMode::Sequential => {
                        let mut h = 0.0;
                        for p in pairs.iter_mut() {
                            h = p.0 * h + p.1;
                            p.1 = h;
                        }
                    }
                    ScanMode::Associative => associative_scan(&mut pairs),
                }
                for (t, p) in pairs.iter().enumerate() {
                    let row = bi * len + t;
                    states[(row * dc + d) * ns + n] = p.1;
                }
            }
            for t in 0..len {
                let row = bi * len + t;
                let h = &states[(row * dc + d) * ns..(row * dc + d + 1) * ns];
                let c = &ops.c[row * ns..(row + 1) * ns];
                let mut acc = ops.d[d] * ops.u[row * dc + d];
                for (hv, cv) in h.iter().zip(c) {
                    acc += hv * cv;
                }
                y[row * dc + d] = acc;
            }
        }
    }
    Ok((y, states, abars))
}

/// Gradients of the scan, in operand order `(u, delta, a, b, c, d)`.
pub fn selective_scan_backward(dims: ScanDims, ops: &ScanOperands, states: &[f64], grad_y: &[f64]) -> [Vec<f64>; 6] {
    scan_backward_impl(dims, ops, states, None, grad_y)
}

fn scan_backward_impl(
    dims: ScanDims,
    ops: &ScanOperands,
    states: &[f64],
    abars: Option<&[f64]>,
    grad_y: &[f64],
) -> [Vec<f64>; 6] {
    let ScanDims { batch, len, channels: dc, state: ns } = dims;
    let rows = dims.rows();
    let mut du = vec![0.0; rows * dc];
    let mut ddelta = vec![0.0; rows * dc];
    let mut da = vec![0.0; dc * ns];
    let mut db = vec![0.0; rows * ns];
    let mut dcm = vec![0.0; rows * ns];
    let mut dd = vec![0.0; dc];
    let mut dh = vec![0.0; ns];
    for bi in 0..batch {
        for d in 0..dc {
            dh.iter_mut().for_each(|v| *v = 0.0);
            let arow = &ops.a[d * ns..(d + 1) * ns];
            for t in (0..len).rev() {
                let row = bi * len + t;
                let gy = grad_y[row * dc + d];
                let u = ops.u[row * dc + d];
                let dt = ops.delta[row * dc + d];
                dd[d] += gy * u;
                du[row * dc + d] += gy * ops.d[d];
                let h = &states[(row * dc + d) * ns..(row * dc + d + 1) * ns];
                let brow = &ops.b[row * ns..(row + 1) * ns];
                let crow = &ops.c[row * ns..(row + 1) * ns];
                let mut g_delta = 0.0;
                let mut g_u = 0.0;
                for n in 0..ns {
                    dh[n] += gy * crow[n];
                    dcm[row * ns + n] += gy * h[n];
                    let h_prev = if t > 0 { states[((row - 1) * dc + d) * ns + n] } else { 0.0 };
                    let abar = match abars {
                        Some(cached) => cached[(row * dc + d) * ns + n],
                        None => (dt * arow[n]).exp(),
                    };
                    let g_abar = dh[n] * h_prev * abar;
                    g_delta += g_abar * arow[n] + dh[n] * brow[n] * u;
                    da[d * ns + n] += g_abar * dt;
                    db[row * ns + n] += dh[n] * dt * u;
                    g_u += dh[n] * dt * brow[n];
                    dh[n] *= abar;
                }
                ddelta[row * dc + d] += g_delta;
                du[row * dc + d] += g_u;
            }
        }
    }
    [du, ddelta, da, db, dcm, dd]
}

struct SelectiveScanOp {
    dims: ScanDims,
    states: Vec<f64>,
    abars: Vec<f64>,
}

impl CustomOp for SelectiveScanOp {
    fn name(&self) -> &'static str {
        "selective_scan"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let ops = ScanOperands {
            u: inputs[0].data(),
            delta: inputs[1].data(),
            a: inputs[2].data(),
            b: inputs[3].data(),
            c: inputs[4].data(),
            d: inputs[5].data(),
        };
        let grads = scan_backward_impl(self.dims, &ops, &self.states, Some(&self.abars), grad.data());
        grads
            .into_iter()
            .zip(inputs)
            .map(|(g, t)| Some(Tensor::new(t.shape().to_vec(), g).expect("gradient shape")))
            .collect()
    }
}

/// Records a selective scan on `tape`. `u`, `delta`: `[rows, D]`; `a`:
/// `[D, N]`; `b`, `c`: `[rows, N]`; `d`: `[D]`.
#[allow(clippy::too_many_arguments)]
pub fn selective_scan_on_tape(
    tape: &mut Tape,
    u: Var,
    delta: Var,
    a: Var,
    b: Var,
    c: Var,
    d: Var,
    batch: usize,
    len: usize,
    mode: ScanMode,
) -> Result<Var, SsmError> {
    let (channels, state) = {
        let ta = tape.value(a);
        (ta.rows(), ta.cols())
    };
    let dims = ScanDims { batch, len, channels, state };
    let ops = ScanOperands {
        u: tape.value(u).data(),
        delta: tape.value(delta).data(),
        a: tape.value(a).data(),
        b: tape.value(b).data(),
        c: tape.value(c).data(),
        d: tape.value(d).data(),
    };
    let (y, states, abars) = scan_forward_cached(dims, &ops, mode)?;
    let out = Tensor::new(vec![dims.rows(), channels], y)?;
    Ok(tape.custom(Box::new(SelectiveScanOp { dims, states, abars }), &[u, delta, a, b, c, d], out)?)
}

/// Depthwise causal convolution over time:
/// `y[t, c] = bias[c] + Σ_k w[c, k] · x[t − (K−1) + k, c]`, zero-padded.
pub fn causal_conv_forward(x: &[f64], w: &[f64], bias: &[f64], batch: usize, len: usize, width: usize) -> Vec<f64> {
    let ch = bias.len();
    let mut y = vec![0.0; batch * len * ch];
    for bi in 0..batch {
        for t in 0..len {
            let row = bi * len + t;
            let out = &mut y[row * ch..(row + 1) * ch];
            out.copy_from_slice(bias);
            for k in 0..width {
                let Some(src_t) = (t + k + 1).checked_sub(width) else { continue };
                let src = &x[(bi * len + src_t) * ch..(bi * len + src_t + 1) * ch];
                for c in 0..ch {
                    out[c] += w[c * width + k] * src[c];
                }
            }
        }
    }
    y
}

struct CausalConvOp {
    batch: usize,
    len: usize,
    width: usize,
}

impl CustomOp for CausalConvOp {
    fn name(&self) -> &'static str {
        "causal_conv"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (x, w, bias) = (inputs[0], inputs[1], inputs[2]);
        let ch = bias.len();
        let (batch, len, width) = (self.batch, self.len, self.width);
        let g = grad.data();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; ch];
        for bi in 0..batch {
            for t in 0..len {
                let row = bi * len + t;
                let grow = &g[row * ch..(row + 1) * ch];
                for (d, gv) in db.iter_mut().zip(grow) {
                    *d += gv;
                }
                for k in 0..width {
                    let Some(src_t) = (t + k + 1).checked_sub(width) else { continue };
                    let src = (bi * len + src_t) * ch;
                    for c in 0..ch {
                        dw[c * width + k] += grow[c] * x.data()[src + c];
                        dx[src + c] += grow[c] * w.data()[c * width + k];
                    }
                }
            }
        }
        vec![
            Some(Tensor::new(x.shape().to_vec(), dx).expect("shape")),
            Some(Tensor::new(w.shape().to_vec(), dw).expect("shape")),
            Some(Tensor::new(bias.shape().to_vec(), db).expect("shape")),
        ]
    }
}

/// Records a depthwise causal convolution. `x`: `[batch·len, C]`, `w`: `[C, K]`, `bias`: `[C]`.
pub fn causal_conv_on_tape(
    tape: &mut Tape,
    x: Var,
    w: Var,
    bias: Var,
    batch: usize,
    len: usize,
) -> Result<Var, NumericsError> {
    let (tx, tw, tb) = (tape.value(x), tape.value(w), tape.value(bias));
    let ch = tb.len();
    if tx.cols() != ch || tw.rows() != ch || tx.rows() != batch * len {
        return Err(NumericsError::Shape {
            op: "causal_conv",
            detail: format!("x {:?}, w {:?}, bias {:?}, batch {batch}, len {len}", tx.shape(), tw.shape(), tb.shape()),
        });
    }
    let width = tw.cols();
    let y = causal_conv_forward(tx.data(), tw.data(), tb.data(), batch, len, width);
    let out = Tensor::new(vec![batch * len, ch], y)?;
    tape.custom(Box::new(CausalConvOp { batch, len, width }), &[x, w, bias], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn associative_scan_is_running_count_for_unit_pairs() {
        let mut pairs = vec![(1.0, 1.0); 9];
        associative_scan(&mut pairs);
        let counts: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        assert_eq!(counts, (1..=9).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn associative_scan_single_element_is_identity() {
        let mut pairs = vec![(0.3, 0.7)];
        associative_scan(&mut pairs);
        assert_eq!(pairs, vec![(0.3, 0.7)]);
    }

    #[test]
    fn combine_is_associative() {
        let (p, q, r) = ((0.5, 1.0), (0.25, -2.0), (2.0, 0.5));
        let left = combine(combine(p, q), r);
        let right = combine(p, combine(q, r));
        assert!((left.0 - right.0).abs() < 1e-15 && (left.1 - right.1).abs() < 1e-15);
    }

    #[test]
    fn operand_shape_errors_are_named() {
        let dims = ScanDims { batch: 1, len: 2, channels: 1, state: 2 };
        let ops = ScanOperands { u: &[0.0; 2], delta: &[0.1; 2], a: &[-1.0; 2], b: &[0.0; 3], c: &[0.0; 4], d: &[0.0] };
        let err = selective_scan_forward(dims, &ops, ScanMode::Sequential).unwrap_err();
        assert!(matches!(err, SsmError::Operand { name: "B", .. }));
    }

    #[test]
    fn non_negative_a_is_rejected() {
        let dims = ScanDims { batch: 1, len: 1, channels: 1, state: 1 };
        let ops = ScanOperands { u: &[1.0], delta: &[0.1], a: &[0.0], b: &[1.0], c: &[1.0], d: &[0.0] };
        assert!(matches!(
            selective_scan_forward(dims, &ops, ScanMode::Sequential),
            Err(SsmError::UnstableDiscretization { .. })
        ));
    }

    #[test]
    fn causal_conv_shifts_impulse() {
        // one channel, width 3, weights [w0 w1 w2]: y_t = w2 x_t + w1 x_{t-1} + w0 x_{t-2}
        let y = causal_conv_forward(&[1.0, 0.0, 0.0, 0.0], &[3.0, 2.0, 1.0], &[0.0], 1, 4, 3);
        assert_eq!(y, vec![1.0, 2.0, 3.0, 0.0]);
    }
}
