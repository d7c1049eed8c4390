use rand::Rng;

use crate::numerics::layers::{fan_in_uniform, linear_row, linear_rows, silu, uniform};
use crate::numerics::{ParamBinding, ParamStore, Tape, Tensor, Var};

use super::scan::{causal_conv_on_tape, ScanMode};
use super::selective::SelectiveSsm;
use super::SsmError;

/// Number of blocks in the value network's sequence model.
pub const STACK_DEPTH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MambaConfig {
    pub d_model: usize,
    pub d_state: usize,
    pub expand: usize,
    pub conv_width: usize,
    pub dt_rank: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub norm_eps: f64,
}

impl Default for MambaConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            d_state: 16,
            expand: 2,
            conv_width: 4,
            dt_rank: 1,
            dt_min: 1e-3,
            dt_max: 0.1,
            norm_eps: 1e-5,
        }
    }
}

impl MambaConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }
}

/// Residual block: RMS norm → in-projection into an SSM branch and a gate
/// branch → (causal conv → SiLU → selective scan) · SiLU(gate) →
/// out-projection → + input.
#[derive(Clone, Debug)]
pub struct MambaBlock {
    pub config: MambaConfig,
    pub ssm: SelectiveSsm,
    norm: String,
    in_proj: String,
    conv_w: String,
    conv_b: String,
    out_proj: String,
}

/// Recurrent inference state of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockState {
    /// Last `conv_width − 1` conv inputs, oldest first.
    conv: Vec<f64>,
    ssm: Vec<f64>,
}

impl MambaBlock {
    pub fn new(prefix: &str, config: MambaConfig) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Self {
            config,
            ssm: SelectiveSsm::new(&n("ssm"), config.d_inner(), config.d_state, config.dt_rank),
            norm: n("norm.weight"),
            in_proj: n("in_proj.weight"),
            conv_w: n("conv.weight"),
            conv_b: n("conv.bias"),
            out_proj: n("out_proj.weight"),
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let c = self.config;
        let di = c.d_inner();
        store.insert(&self.norm, Tensor::filled(&[c.d_model], 1.0));
        store.insert(&self.in_proj, fan_in_uniform(rng, c.d_model, 2 * di));
        store.insert(&self.conv_w, uniform(rng, &[di, c.conv_width], 1.0 / (c.conv_width as f64).sqrt()));
        store.insert(&self.conv_b, Tensor::zeros(&[di]));
        self.ssm.init(store, rng, c.dt_min, c.dt_max);
        store.insert(&self.out_proj, fan_in_uniform(rng, di, c.d_model));
    }

    /// Zeroes the in/out projections so the block reduces to its residual path.
    pub fn zero_projections(&self, store: &mut ParamStore) {
        for name in [&self.in_proj, &self.out_proj] {
            if let Ok(t) = store.get_mut(name) {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn out_proj_name(&self) -> &str {
        &self.out_proj
    }

    /// `x: [batch·len, d_model]` → same shape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamBinding,
        x: Var,
        batch: usize,
        len: usize,
        mode: ScanMode,
    ) -> Result<Var, SsmError> {
        let c = self.config;
        let di = c.d_inner();
        let width = tape.value(x).cols();
        if width != c.d_model {
            return Err(SsmError::Width { expected: c.d_model, got: width });
        }
        let normed = tape.rms_norm(x, params.var(&self.norm)?, c.norm_eps)?;
        let xz = tape.matmul(normed, params.var(&self.in_proj)?)?;
        let xs = tape.slice_cols(xz, 0, di)?;
        let z = tape.slice_cols(xz, di, di)?;
        let conv = causal_conv_on_tape(tape, xs, params.var(&self.conv_w)?, params.var(&self.conv_b)?, batch, len)?;
        let act = tape.silu(conv)?;
        let y = self.ssm.forward(tape, params, act, batch, len, mode)?;
        let gate = tape.silu(z)?;
        let gated = tape.mul(y, gate)?;
        let out = tape.matmul(gated, params.var(&self.out_proj)?)?;
        Ok(tape.add(x, out)?)
    }

    pub fn initial_state(&self) -> BlockState {
        BlockState {
            conv: vec![0.0; (self.config.conv_width - 1) * self.config.d_inner()],
            ssm: self.ssm.initial_state(),
        }
    }

    /// One recurrent step for a single `d_model` row.
    pub fn step(&self, store: &ParamStore, state: &mut BlockState, x: &[f64]) -> Result<Vec<f64>, SsmError> {
        let c = self.config;
        let di = c.d_inner();
        let k = c.conv_width;
        if x.len() != c.d_model {
            return Err(SsmError::Width { expected: c.d_model, got: x.len() });
        }
        let gain = store.get(&self.norm)?.data();
        let ms = x.iter().map(|v| v * v).sum::<f64>() / c.d_model as f64;
        let r = 1.0 / (ms + c.norm_eps).sqrt();
        let normed: Vec<f64> = x.iter().zip(gain).map(|(v, g)| v * r * g).collect();
        let xz = linear_row(&normed, store.get(&self.in_proj)?, None);
        let (xs, z) = xz.split_at(di);

        let w = store.get(&self.conv_w)?.data();
        let mut conv = store.get(&self.conv_b)?.data().to_vec();
        for tap in 0..k {
            let src = if tap + 1 == k { xs } else { &state.conv[tap * di..(tap + 1) * di] };
            for ch in 0..di {
                conv[ch] += w[ch * k + tap] * src[ch];
            }
        }
        if k > 1 {
            state.conv.copy_within(di.., 0);
            let last = state.conv.len() - di;
            state.conv[last..].copy_from_slice(xs);
        }
        let act: Vec<f64> = conv.iter().map(|&v| silu(v)).collect();
        let y = self.ssm.step(store, &mut state.ssm, &act)?;
        let gated: Vec<f64> = y.iter().zip(z).map(|(a, &g)| a * silu(g)).collect();
        let out = linear_row(&gated, store.get(&self.out_proj)?, None);
        Ok(x.iter().zip(out).map(|(a, b)| a + b).collect())
    }
}

impl MambaBlock {
    /// One step for `rows` inputs that all continue from the same `state`,
    /// which is not modified. `x` is row-major `[rows, d_model]`.
    pub fn step_rows(
        &self,
        store: &ParamStore,
        state: &BlockState,
        x: &[f64],
        rows: usize,
    ) -> Result<Vec<f64>, SsmError> {
        let c = self.config;
        let (dm, di, k) = (c.d_model, c.d_inner(), c.conv_width);
        if x.len() != rows * dm {
            return Err(SsmError::Width { expected: rows * dm, got: x.len() });
        }
        let gain = store.get(&self.norm)?.data();
        let mut normed = vec![0.0; x.len()];
        for (xrow, nrow) in x.chunks(dm).zip(normed.chunks_mut(dm)) {
            let ms = xrow.iter().map(|v| v * v).sum::<f64>() / dm as f64;
            let r = 1.0 / (ms + c.norm_eps).sqrt();
            for ((n, v), g) in nrow.iter_mut().zip(xrow).zip(gain) {
                *n = v * r * g;
            }
        }
        let xz = linear_rows(&normed, rows, store.get(&self.in_proj)?, None);
        let w = store.get(&self.conv_w)?.data();
        let bias = store.get(&self.conv_b)?.data();
        // contribution of the remembered inputs is shared by every row
        let mut history = bias.to_vec();
        for tap in 0..k - 1 {
            let src = &state.conv[tap * di..(tap + 1) * di];
            for ch in 0..di {
                history[ch] += w[ch * k + tap] * src[ch];
            }
        }
        let mut act = vec![0.0; rows * di];
        for row in 0..rows {
            let xs = &xz[row * 2 * di..row * 2 * di + di];
            for ch in 0..di {
                act[row * di + ch] = silu(history[ch] + w[ch * k + k - 1] * xs[ch]);
            }
        }
        let y = self.ssm.step_rows(store, &state.ssm, &act, rows)?;
        let mut gated = vec![0.0; rows * di];
        for row in 0..rows {
            let z = &xz[row * 2 * di + di..(row + 1) * 2 * di];
            for ch in 0..di {
                gated[row * di + ch] = y[row * di + ch] * silu(z[ch]);
            }
        }
        let mut out = linear_rows(&gated, rows, store.get(&self.out_proj)?, None);
        for (o, v) in out.iter_mut().zip(x) {
            *o += v;
        }
        Ok(out)
    }
}

/// The four-block sequence model.
#[derive(Clone, Debug)]
pub struct MambaStack {
    blocks: Vec<MambaBlock>,
}

impl MambaStack {
    pub fn new(prefix: &str, config: MambaConfig) -> Self {
        let blocks = (0..STACK_DEPTH).map(|i| MambaBlock::new(&format!("{prefix}.{i}"), config)).collect();
        Self { blocks }
    }

    pub fn from_blocks(blocks: Vec<MambaBlock>) -> Result<Self, SsmError> {
        if blocks.len() != STACK_DEPTH {
            return Err(SsmError::BlockCount(blocks.len()));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[MambaBlock] {
        &self.blocks
    }

    pub fn config(&self) -> MambaConfig {
        self.blocks[0].config
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for b in &self.blocks {
            b.init(store, rng);
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamBinding,
        x: Var,
        batch: usize,
        len: usize,
        mode: ScanMode,
    ) -> Result<Var, SsmError> {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(tape, params, h, batch, len, mode)?;
        }
        Ok(h)
    }

    /// Evaluates the stack on plain values: `x: [batch·len, d_model]`.
    pub fn apply(&self, store: &ParamStore, x: &Tensor, batch: usize, len: usize) -> Result<Tensor, SsmError> {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &binding, xv, batch, len, ScanMode::Sequential)?;
        Ok(tape.value(y).clone())
    }

    pub fn initial_state(&self) -> Vec<BlockState> {
        self.blocks.iter().map(MambaBlock::initial_state).collect()
    }

    /// Final-position outputs for `rows` alternative next inputs after a
    /// shared prefix summarised by `state`.
    pub fn step_rows(
        &self,
        store: &ParamStore,
        state: &[BlockState],
        x: &[f64],
        rows: usize,
    ) -> Result<Vec<f64>, SsmError> {
        let mut h = x.to_vec();
        for (b, s) in self.blocks.iter().zip(state) {
            h = b.step_rows(store, s, &h, rows)?;
        }
        Ok(h)
    }

    pub fn step(&self, store: &ParamStore, state: &mut [BlockState], x: &[f64]) -> Result<Vec<f64>, SsmError> {
        let mut h = x.to_vec();
        for (b, s) in self.blocks.iter().zip(state.iter_mut()) {
            h = b.step(store, s, &h)?;
        }
        Ok(h)
    }
}
