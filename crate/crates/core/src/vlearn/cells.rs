//! Recurrent cells built from tape primitives.

use rand::Rng;

use crate::numerics::layers::{fan_in_uniform, linear, uniform};
use crate::numerics::{NumericsError, ParamBinding, ParamStore, Tape, Tensor, Var};

/// Gated recurrent unit:
/// `r = σ(x·Wxr + bxr + h·Whr + bhr)`, `z` likewise,
/// `n = tanh(x·Wxn + bxn + r ⊙ (h·Whn + bhn))`, `h' = n + z ⊙ (h − n)`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    wx: String,
    wh: String,
    bx: String,
    bh: String,
}

impl GruCell {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Self { input, hidden, wx: n("wx"), wh: n("wh"), bx: n("bx"), bh: n("bh") }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        let h3 = 3 * self.hidden;
        store.insert(&self.wx, uniform(rng, &[self.input, h3], bound));
        store.insert(&self.wh, uniform(rng, &[self.hidden, h3], bound));
        store.insert(&self.bx, uniform(rng, &[h3], bound));
        store.insert(&self.bh, uniform(rng, &[h3], bound));
    }

    /// `x: [rows, input]`, `h: [rows, hidden]` → next hidden state.
    pub fn step(&self, tape: &mut Tape, params: &ParamBinding, x: Var, h: Var) -> Result<Var, NumericsError> {
        let hd = self.hidden;
        let gx = linear(tape, x, params.var(&self.wx)?, Some(params.var(&self.bx)?))?;
        let gh = linear(tape, h, params.var(&self.wh)?, Some(params.var(&self.bh)?))?;
        let rz_x = tape.slice_cols(gx, 0, 2 * hd)?;
        let rz_h = tape.slice_cols(gh, 0, 2 * hd)?;
        let rz_pre = tape.add(rz_x, rz_h)?;
        let rz = tape.sigmoid(rz_pre)?;
        let r = tape.slice_cols(rz, 0, hd)?;
        let z = tape.slice_cols(rz, hd, hd)?;
        let n_x = tape.slice_cols(gx, 2 * hd, hd)?;
        let n_h = tape.slice_cols(gh, 2 * hd, hd)?;
        let gated = tape.mul(r, n_h)?;
        let n_pre = tape.add(n_x, gated)?;
        let n = tape.tanh(n_pre)?;
        let diff = tape.sub(h, n)?;
        let keep = tape.mul(z, diff)?;
        tape.add(n, keep)
    }
}

/// Long short-term memory cell with gate order `i, f, g, o`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    wx: String,
    wh: String,
    b: String,
}

impl LstmCell {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Self { input, hidden, wx: n("wx"), wh: n("wh"), b: n("b") }
    }

    /// Forget-gate bias starts at 1.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let hd = self.hidden;
        store.insert(&self.wx, fan_in_uniform(rng, self.input, 4 * hd));
        store.insert(&self.wh, fan_in_uniform(rng, hd, 4 * hd));
        let mut b = vec![0.0; 4 * hd];
        b[hd..2 * hd].iter_mut().for_each(|v| *v = 1.0);
        store.insert(&self.b, Tensor::vector(b));
    }

    /// Returns `(h', c')`.
    pub fn step(
        &self,
        tape: &mut Tape,
        params: &ParamBinding,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var), NumericsError> {
        let hd = self.hidden;
        let gx = linear(tape, x, params.var(&self.wx)?, Some(params.var(&self.b)?))?;
        let gh = tape.matmul(h, params.var(&self.wh)?)?;
        let pre = tape.add(gx, gh)?;
        let if_pre = tape.slice_cols(pre, 0, 2 * hd)?;
        let o_pre = tape.slice_cols(pre, 3 * hd, hd)?;
        let ifo_pre = tape.concat_cols(&[if_pre, o_pre])?;
        let ifo = tape.sigmoid(ifo_pre)?;
        let g_pre = tape.slice_cols(pre, 2 * hd, hd)?;
        let g = tape.tanh(g_pre)?;
        let i = tape.slice_cols(ifo, 0, hd)?;
        let f = tape.slice_cols(ifo, hd, hd)?;
        let o = tape.slice_cols(ifo, 2 * hd, hd)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let ct = tape.tanh(c_next)?;
        let h_next = tape.mul(o, ct)?;
        Ok((h_next, c_next))
    }
}
