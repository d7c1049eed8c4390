use std::fmt;

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::{NumericsError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Silu,
    Softplus,
    Exp,
    Negate,
    Square,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

/// An operation whose forward pass is computed by the caller and whose
/// backward rule lives outside this module.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradients for each input given the output gradient. `None` means the
    /// input receives no contribution.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Binary(Binary, usize, usize),
    Unary(Unary, usize),
    Sum(usize),
    Mean(usize),
    Mse(usize, usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols { x: usize, start: usize },
    GatherRows { x: usize, index: Vec<usize> },
    Reshape(usize),
    RmsNorm { x: usize, weight: usize, eps: f64 },
    Custom(Box<dyn CustomOp>, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::Mse(a, b) => vec![*a, *b],
            Op::Unary(_, a) | Op::Sum(a) | Op::Mean(a) | Op::Reshape(a) => vec![*a],
            Op::SliceCols { x, .. } | Op::GatherRows { x, .. } => vec![*x],
            Op::ConcatCols(parts) | Op::ConcatRows(parts) => parts.clone(),
            Op::RmsNorm { x, weight, .. } => vec![*x, *weight],
            Op::Custom(_, ins) => ins.clone(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Binary(Binary::Add, ..) => "add",
            Op::Binary(Binary::Sub, ..) => "sub",
            Op::Binary(Binary::Mul, ..) => "mul",
            Op::Unary(..) => "unary",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Mse(..) => "mse_loss",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::GatherRows { .. } => "gather_rows",
            Op::Reshape(_) => "reshape",
            Op::RmsNorm { .. } => "rms_norm",
            Op::Custom(op, _) => op.name(),
        }
    }
}

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
/// node list is always topologically sorted.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    requires_grad: Vec<bool>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.values.len()).finish()
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    /// Gradient with respect to `v`; zeros if `v` did not participate.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::Shape { op, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Silu => x * sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Exp => x.exp(),
            Unary::Negate => -x,
            Unary::Square => x * x,
            Unary::Scale(s) => s * x,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Unary::Softplus => sigmoid(x),
            Unary::Exp => y,
            Unary::Negate => -1.0,
            Unary::Square => 2.0 * x,
            Unary::Scale(s) => s,
        }
    }
}

/// Trailing-dimension broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Flat index into an input of shape `src` for every element of `out`.
fn broadcast_index(src: &[usize], out: &[usize]) -> Vec<usize> {
    let n = out.len();
    let offset = n - src.len();
    let mut strides = vec![0; n];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + offset] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let total: usize = out.iter().product();
    let mut idx = vec![0; total];
    let mut counter = vec![0; n];
    for slot in idx.iter_mut() {
        *slot = counter.iter().zip(&strides).map(|(c, s)| c * s).sum();
        for d in (0..n).rev() {
            counter[d] += 1;
            if counter[d] < out[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    idx
}

enum Layout {
    Same,
    /// rhs repeats every `period` elements of lhs (row-vector bias)
    RhsPeriodic(usize),
    LhsPeriodic(usize),
    General(Vec<usize>, Vec<usize>),
}

fn layout(a: &[usize], b: &[usize], out: &[usize]) -> Layout {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    let no: usize = out.iter().product();
    if a == b {
        Layout::Same
    } else if na == no && out.ends_with(b) || na == no && nb == 1 {
        Layout::RhsPeriodic(nb)
    } else if nb == no && out.ends_with(a) || nb == no && na == 1 {
        Layout::LhsPeriodic(na)
    } else {
        Layout::General(broadcast_index(a, out), broadcast_index(b, out))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op.name() });
        }
        let requires_grad = op.inputs().iter().any(|&i| self.requires_grad[i]);
        self.values.push(value);
        self.ops.push(op);
        self.requires_grad.push(requires_grad);
        Ok(Var(self.values.len() - 1))
    }

    /// Records a differentiable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(Op::Leaf);
        self.requires_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", format!("{:?} · {:?}", ta.shape(), tb.shape())));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a.0, b.0))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let shape = broadcast_shape(ta.shape(), tb.shape())
            .ok_or_else(|| shape_err("broadcast", format!("{:?} vs {:?}", ta.shape(), tb.shape())))?;
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let (da, db) = (ta.data(), tb.data());
        let out: Vec<f64> = match layout(ta.shape(), tb.shape(), &shape) {
            Layout::Same => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Layout::RhsPeriodic(p) => da.iter().enumerate().map(|(i, &x)| f(x, db[i % p])).collect(),
            Layout::LhsPeriodic(p) => db.iter().enumerate().map(|(i, &y)| f(da[i % p], y)).collect(),
            Layout::General(ia, ib) => ia.iter().zip(&ib).map(|(&i, &j)| f(da[i], db[j])).collect(),
        };
        self.push(Tensor::new(shape, out)?, Op::Binary(kind, a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, x: Var) -> Result<Var, NumericsError> {
        let tx = &self.values[x.0];
        let out: Vec<f64> = tx.data().iter().map(|&v| kind.apply(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(t, Op::Unary(kind, x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(Unary::Tanh, x)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(Unary::Silu, x)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(Unary::Softplus, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(Unary::Exp, x)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(Unary::Negate, x)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, NumericsError> {
        self.unary(Unary::Scale(s), x)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let s = self.values[x.0].data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x.0))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, NumericsError> {
        let t = &self.values[x.0];
        if t.is_empty() {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x.0))
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, NumericsError> {
        let (p, t) = (&self.values[pred.0], &self.values[target.0]);
        if p.shape() != t.shape() || p.is_empty() {
            return Err(shape_err("mse_loss", format!("{:?} vs {:?}", p.shape(), t.shape())));
        }
        let s = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        self.push(Tensor::scalar(s), Op::Mse(pred.0, target.0))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let rows = self.values[parts[0].0].rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = &self.values[p.0];
            if t.rows() != rows {
                return Err(shape_err("concat_cols", format!("rows {} vs {rows}", t.rows())));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.values[p.0].data()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(vec![rows, total], out)?;
        self.push(t, Op::ConcatCols(parts.iter().map(|v| v.0).collect()))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_rows", "no parts".to_string()));
        };
        let cols = self.values[first.0].cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = &self.values[p.0];
            if t.cols() != cols {
                return Err(shape_err("concat_rows", format!("cols {} vs {cols}", t.cols())));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let t = Tensor::new(vec![rows, cols], out)?;
        self.push(t, Op::ConcatRows(parts.iter().map(|v| v.0).collect()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, NumericsError> {
        let t = &self.values[x.0];
        let (rows, cols) = (t.rows(), t.cols());
        if start + width > cols {
            return Err(shape_err("slice_cols", format!("{start}+{width} > {cols}")));
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&t.data()[r * cols + start..r * cols + start + width]);
        }
        let t = Tensor::new(vec![rows, width], out)?;
        self.push(t, Op::SliceCols { x: x.0, start })
    }

    /// Selects rows of a matrix; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, NumericsError> {
        let t = &self.values[x.0];
        let (rows, cols) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= rows {
                return Err(shape_err("gather_rows", format!("row {i} of {rows}")));
            }
            out.extend_from_slice(&t.data()[i * cols..(i + 1) * cols]);
        }
        let t = Tensor::new(vec![index.len(), cols], out)?;
        self.push(t, Op::GatherRows { x: x.0, index: index.to_vec() })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NumericsError> {
        let t = self.values[x.0].clone().reshape(shape)?;
        self.push(t, Op::Reshape(x.0))
    }

    /// Row-wise RMS normalisation with a learned per-column gain.
    pub fn rms_norm(&mut self, x: Var, weight: Var, eps: f64) -> Result<Var, NumericsError> {
        let (tx, tw) = (&self.values[x.0], &self.values[weight.0]);
        let cols = tx.cols();
        if tw.len() != cols {
            return Err(shape_err("rms_norm", format!("gain {} vs width {cols}", tw.len())));
        }
        let mut out = vec![0.0; tx.len()];
        for (orow, xrow) in out.chunks_mut(cols).zip(tx.data().chunks(cols)) {
            let ms = xrow.iter().map(|v| v * v).sum::<f64>() / cols as f64;
            let r = 1.0 / (ms + eps).sqrt();
            for ((o, &xv), &w) in orow.iter_mut().zip(xrow).zip(tw.data()) {
                *o = xv * r * w;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(t, Op::RmsNorm { x: x.0, weight: weight.0, eps })
    }

    /// Records an externally computed node with a custom backward rule.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], output: Tensor) -> Result<Var, NumericsError> {
        self.push(output, Op::Custom(op, inputs.iter().map(|v| v.0).collect()))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads, NumericsError> {
        if self.values[loss.0].len() != 1 {
            return Err(NumericsError::NonScalarLoss { shape: self.values[loss.0].shape().to_vec() });
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..self.values.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.values[loss.0].shape(), 1.0));

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let op = &self.ops[id];
            let inputs = op.inputs();
            if inputs.iter().any(|&i| i >= id) {
                return Err(NumericsError::CyclicTape { node: id });
            }
            if !inputs.iter().any(|&i| self.requires_grad[i]) {
                grads[id] = Some(g);
                continue;
            }
            let contributions = self.local_backward(id, &g)?;
            for (input, contrib) in inputs.iter().zip(contributions) {
                let Some(c) = contrib else { continue };
                if !self.requires_grad[*input] {
                    continue;
                }
                match &mut grads[*input] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(c.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(c),
                }
            }
            grads[id] = Some(g);
        }

        // only leaves flagged requires_grad keep a gradient
        for (id, g) in grads.iter_mut().enumerate() {
            if !(matches!(self.ops[id], Op::Leaf) && self.requires_grad[id]) && id != loss.0 {
                *g = None;
            }
        }
        Ok(Grads { grads, shapes: self.values.iter().map(|t| t.shape().to_vec()).collect() })
    }

    fn local_backward(&self, id: usize, g: &Tensor) -> Result<Vec<Option<Tensor>>, NumericsError> {
        let out = &self.values[id];
        let v = |i: usize| &self.values[i];
        Ok(match &self.ops[id] {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let ga = self.requires_grad[*a].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm_nt_acc(g.data(), tb.data(), &mut d, m, k, n);
                    Tensor::new(ta.shape().to_vec(), d).expect("shape")
                });
                let gb = self.requires_grad[*b].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm_tn_acc(ta.data(), g.data(), &mut d, m, k, n);
                    Tensor::new(tb.shape().to_vec(), d).expect("shape")
                });
                vec![ga, gb]
            }
            Op::Binary(kind, a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let lay = layout(ta.shape(), tb.shape(), out.shape());
                let (ia, ib): (Vec<usize>, Vec<usize>) = match lay {
                    Layout::Same => ((0..g.len()).collect(), (0..g.len()).collect()),
                    Layout::RhsPeriodic(p) => ((0..g.len()).collect(), (0..g.len()).map(|i| i % p).collect()),
                    Layout::LhsPeriodic(p) => ((0..g.len()).map(|i| i % p).collect(), (0..g.len()).collect()),
                    Layout::General(ia, ib) => (ia, ib),
                };
                let mut da = vec![0.0; ta.len()];
                let mut db = vec![0.0; tb.len()];
                for (k, &gv) in g.data().iter().enumerate() {
                    let (i, j) = (ia[k], ib[k]);
                    match kind {
                        Binary::Add => {
                            da[i] += gv;
                            db[j] += gv;
                        }
                        Binary::Sub => {
                            da[i] += gv;
                            db[j] -= gv;
                        }
                        Binary::Mul => {
                            da[i] += gv * tb.data()[j];
                            db[j] += gv * ta.data()[i];
                        }
                    }
                }
                vec![Some(Tensor::new(ta.shape().to_vec(), da)?), Some(Tensor::new(tb.shape().to_vec(), db)?)]
            }
            Op::Unary(kind, x) => {
                let tx = v(*x);
                let d: Vec<f64> = tx
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| gv * kind.derivative(xv, yv))
                    .collect();
                vec![Some(Tensor::new(tx.shape().to_vec(), d)?)]
            }
            Op::Sum(x) => vec![Some(Tensor::filled(v(*x).shape(), g.item()))],
            Op::Mean(x) => {
                let tx = v(*x);
                vec![Some(Tensor::filled(tx.shape(), g.item() / tx.len() as f64))]
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (v(*p), v(*t));
                let scale = 2.0 * g.item() / tp.len() as f64;
                let dp: Vec<f64> = tp.data().iter().zip(tt.data()).map(|(a, b)| scale * (a - b)).collect();
                let dt: Vec<f64> = dp.iter().map(|x| -x).collect();
                vec![Some(Tensor::new(tp.shape().to_vec(), dp)?), Some(Tensor::new(tt.shape().to_vec(), dt)?)]
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = v(p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    res.push(Some(Tensor::new(v(p).shape().to_vec(), d)?));
                    offset += w;
                }
                res
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let n = v(p).len();
                    res.push(Some(Tensor::new(v(p).shape().to_vec(), g.data()[offset..offset + n].to_vec())?));
                    offset += n;
                }
                res
            }
            Op::SliceCols { x, start } => {
                let tx = v(*x);
                let (rows, cols, w) = (tx.rows(), tx.cols(), out.cols());
                let mut d = vec![0.0; tx.len()];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                vec![Some(Tensor::new(tx.shape().to_vec(), d)?)]
            }
            Op::GatherRows { x, index } => {
                let tx = v(*x);
                let cols = tx.cols();
                let mut d = vec![0.0; tx.len()];
                for (k, &i) in index.iter().enumerate() {
                    for c in 0..cols {
                        d[i * cols + c] += g.data()[k * cols + c];
                    }
                }
                vec![Some(Tensor::new(tx.shape().to_vec(), d)?)]
            }
            Op::Reshape(x) => vec![Some(g.clone().reshape(v(*x).shape().to_vec())?)],
            Op::RmsNorm { x, weight, eps } => {
                let (tx, tw) = (v(*x), v(*weight));
                let cols = tx.cols();
                let mut dx = vec![0.0; tx.len()];
                let mut dw = vec![0.0; tw.len()];
                for ((xrow, grow), dxrow) in tx.data().chunks(cols).zip(g.data().chunks(cols)).zip(dx.chunks_mut(cols))
                {
                    let ms = xrow.iter().map(|v| v * v).sum::<f64>() / cols as f64;
                    let r = 1.0 / (ms + eps).sqrt();
                    let mut dot = 0.0;
                    for c in 0..cols {
                        let xhat = xrow[c] * r;
                        dw[c] += grow[c] * xhat;
                        dot += grow[c] * tw.data()[c] * xhat;
                    }
                    dot /= cols as f64;
                    for c in 0..cols {
                        let xhat = xrow[c] * r;
                        dxrow[c] = r * (grow[c] * tw.data()[c] - xhat * dot);
                    }
                }
                vec![Some(Tensor::new(tx.shape().to_vec(), dx)?), Some(Tensor::new(tw.shape().to_vec(), dw)?)]
            }
            Op::Custom(op, ins) => {
                let inputs: Vec<&Tensor> = ins.iter().map(|&i| v(i)).collect();
                op.backward(&inputs, out, g)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let m = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let out = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let col = tape.constant(Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap());
        let out = tape.matmul(m, col).unwrap();
        assert_eq!(tape.value(out).data(), &[17.0, 39.0]);

        let bad = tape.constant(Tensor::zeros(&[3, 1]));
        assert!(matches!(tape.matmul(m, bad), Err(NumericsError::Shape { .. })));
    }

    #[test]
    fn matmul_grad_all_ones_pattern() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let ab = tape.matmul(a, b).unwrap();
        let loss = tape.sum(ab).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a).data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn elementwise_closed_forms() {
        assert_eq!(Unary::Sigmoid.apply(0.0), 0.5);
        assert!((Unary::Softplus.apply(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let silu1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((Unary::Silu.apply(1.0) - silu1).abs() < 1e-15);
        assert!((Unary::Silu.apply(1.0) - 0.7311).abs() < 1e-4);
        // overflow-safe forms
        assert!(Unary::Softplus.apply(800.0).is_finite());
        assert_eq!(Unary::Softplus.apply(-800.0), 0.0);
        assert!(Unary::Sigmoid.apply(-800.0).is_finite());
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[3, 4], &[4]), Some(vec![3, 4]));
        assert_eq!(broadcast_shape(&[3, 1], &[1, 4]), Some(vec![3, 4]));
        assert_eq!(broadcast_shape(&[3, 4], &[3]), None);
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[3, 4]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(matches!(tape.add(a, b), Err(NumericsError::Shape { .. })));
    }

    #[test]
    fn general_broadcast_forward_and_backward() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let b = tape.param(Tensor::new(vec![1, 3], vec![10.0, 20.0, 30.0]).unwrap());
        let c = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 3]);
        assert_eq!(tape.value(c).data(), &[10.0, 20.0, 30.0, 20.0, 40.0, 60.0]);
        let loss = tape.sum(c).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a).data(), &[60.0, 60.0]);
        assert_eq!(g.wrt(b).data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn mse_examples() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let t = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let same = tape.mse_loss(p, p).unwrap();
        assert_eq!(tape.value(same).item(), 0.0);
        let loss = tape.mse_loss(p, t).unwrap();
        assert_eq!(tape.value(loss).item(), 2.5);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(p).data(), &[1.0, 2.0]);
        let wrong = tape.constant(Tensor::vector(vec![0.0; 3]));
        assert!(tape.mse_loss(p, wrong).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let g = tape.backward(x).unwrap();
        assert_eq!(g.wrt(x).item(), 1.0);

        let sq = tape.unary(Unary::Square, x).unwrap();
        let g = tape.backward(sq).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[4]));
        let unused = tape.param(Tensor::filled(&[2], 7.0));
        let s = tape.sigmoid(x).unwrap();
        let loss = tape.sum(s).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.25; 4]);
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
        assert!(matches!(tape.backward(s), Err(NumericsError::NonScalarLoss { .. })));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1000.0));
        assert!(matches!(tape.exp(x), Err(NumericsError::NonFinite { op: "unary" })));
    }

    #[test]
    fn rms_norm_zero_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let w = tape.param(Tensor::filled(&[3], 1.0));
        let y = tape.rms_norm(x, w, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concat_rows_routes_gradient_back() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let b = tape.param(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let c = tape.concat_rows(&[a, b]).unwrap();
        assert_eq!(tape.value(c).shape(), &[3, 2]);
        let w = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let p = tape.mul(c, w).unwrap();
        let loss = tape.sum(p).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a).data(), &[1.0, 2.0]);
        assert_eq!(g.wrt(b).data(), &[3.0, 4.0, 5.0, 6.0]);
        let bad = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(tape.concat_rows(&[a, bad]).is_err());
    }
}
