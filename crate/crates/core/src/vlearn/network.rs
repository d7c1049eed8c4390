use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cells::{GruCell, LstmCell};
use super::features::{StateFeatures, HUMAN_FEATURES, ROBOT_FEATURES};
use crate::numerics::layers::{fan_in_uniform, linear, linear_rows};
use crate::numerics::{Checkpoint, ParamBinding, ParamStore, Tape, Tensor, Var};
use crate::ssm::{MambaConfig, MambaStack, ScanMode};
use crate::Error;

/// Width of one encoder input row: robot features followed by one human's.
pub const PAIR_FEATURES: usize = ROBOT_FEATURES + HUMAN_FEATURES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// GRU crowd encoder feeding the Mamba stack over the window.
    Camrl,
    /// LSTM over humans, MLP value head, no temporal model.
    LstmRl,
    /// Pairwise MLP value, minimum over humans.
    CadrlMlp,
}

impl PolicyKind {
    pub const LEARNED: [PolicyKind; 3] = [PolicyKind::CadrlMlp, PolicyKind::LstmRl, PolicyKind::Camrl];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Camrl => "CAMRL",
            PolicyKind::LstmRl => "LSTMRL",
            PolicyKind::CadrlMlp => "CADRL-MLP",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "camrl" => Ok(PolicyKind::Camrl),
            "lstmrl" | "lstm-rl" => Ok(PolicyKind::LstmRl),
            "cadrl-mlp" | "cadrl" => Ok(PolicyKind::CadrlMlp),
            _ => Err(Error::Invalid(format!("unknown policy `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    pub kind: PolicyKind,
    /// Window length T; the network sees T + 1 joint states.
    pub window: usize,
    /// Per-human embedding width.
    pub embed: usize,
    /// GRU / LSTM hidden width.
    pub hidden: usize,
    /// Hidden width of the baseline MLP heads.
    pub mlp: usize,
    pub mamba: MambaConfig,
}

impl NetConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            window: if kind == PolicyKind::Camrl { 8 } else { 0 },
            embed: 32,
            hidden: 32,
            mlp: 64,
            mamba: MambaConfig::default(),
        }
    }

    pub fn positions(&self) -> usize {
        self.window + 1
    }

    pub fn to_meta(&self) -> BTreeMap<String, String> {
        let m = self.mamba;
        [
            ("net.kind", self.kind.name().to_string()),
            ("net.window", self.window.to_string()),
            ("net.embed", self.embed.to_string()),
            ("net.hidden", self.hidden.to_string()),
            ("net.mlp", self.mlp.to_string()),
            ("mamba.d_model", m.d_model.to_string()),
            ("mamba.d_state", m.d_state.to_string()),
            ("mamba.expand", m.expand.to_string()),
            ("mamba.conv_width", m.conv_width.to_string()),
            ("mamba.dt_rank", m.dt_rank.to_string()),
            ("mamba.dt_min", m.dt_min.to_string()),
            ("mamba.dt_max", m.dt_max.to_string()),
            ("mamba.norm_eps", m.norm_eps.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self, Error> {
        fn get<T: FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T, Error> {
            meta.get(key)
                .ok_or_else(|| Error::Invalid(format!("checkpoint lacks `{key}`")))?
                .parse()
                .map_err(|_| Error::Invalid(format!("checkpoint field `{key}` is malformed")))
        }
        let kind: PolicyKind =
            meta.get("net.kind").ok_or_else(|| Error::Invalid("checkpoint lacks `net.kind`".into()))?.parse()?;
        Ok(Self {
            kind,
            window: get(meta, "net.window")?,
            embed: get(meta, "net.embed")?,
            hidden: get(meta, "net.hidden")?,
            mlp: get(meta, "net.mlp")?,
            mamba: MambaConfig {
                d_model: get(meta, "mamba.d_model")?,
                d_state: get(meta, "mamba.d_state")?,
                expand: get(meta, "mamba.expand")?,
                conv_width: get(meta, "mamba.conv_width")?,
                dt_rank: get(meta, "mamba.dt_rank")?,
                dt_min: get(meta, "mamba.dt_min")?,
                dt_max: get(meta, "mamba.dt_max")?,
                norm_eps: get(meta, "mamba.norm_eps")?,
            },
        })
    }
}

/// Value network: per-state crowd encoder, then (for CAMRL) the Mamba stack
/// across the window, then a scalar per window position.
#[derive(Clone, Debug)]
pub struct ValueNet {
    pub config: NetConfig,
    gru: GruCell,
    lstm: LstmCell,
    stack: MambaStack,
}

const EMBED_W: &str = "enc.embed.weight";
const EMBED_B: &str = "enc.embed.bias";
const LATENT_W: &str = "enc.latent.weight";
const LATENT_B: &str = "enc.latent.bias";
const HEAD_W: &str = "head.weight";
const HEAD_B: &str = "head.bias";

impl ValueNet {
    pub fn new(config: NetConfig) -> Self {
        Self {
            config,
            gru: GruCell::new("enc.gru", config.embed, config.hidden),
            lstm: LstmCell::new("enc.lstm", config.embed, config.hidden),
            stack: MambaStack::new("mamba", config.mamba),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    pub fn stack(&self) -> &MambaStack {
        &self.stack
    }

    fn mlp_input(&self) -> usize {
        match self.config.kind {
            PolicyKind::CadrlMlp => PAIR_FEATURES,
            _ => self.config.hidden + ROBOT_FEATURES,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let c = self.config;
        let mut store = ParamStore::new();
        let embed = |store: &mut ParamStore, rng: &mut R| {
            store.insert(EMBED_W, fan_in_uniform(rng, PAIR_FEATURES, c.embed));
            store.insert(EMBED_B, Tensor::zeros(&[c.embed]));
        };
        match c.kind {
            PolicyKind::Camrl => {
                let d = c.mamba.d_model;
                embed(&mut store, rng);
                self.gru.init(&mut store, rng);
                store.insert(LATENT_W, fan_in_uniform(rng, c.hidden + ROBOT_FEATURES, d));
                store.insert(LATENT_B, Tensor::zeros(&[d]));
                self.stack.init(&mut store, rng);
                store.insert(HEAD_W, fan_in_uniform(rng, d, 1));
                store.insert(HEAD_B, Tensor::zeros(&[1]));
            }
            PolicyKind::LstmRl | PolicyKind::CadrlMlp => {
                if c.kind == PolicyKind::LstmRl {
                    embed(&mut store, rng);
                    self.lstm.init(&mut store, rng);
                }
                let widths = [self.mlp_input(), c.mlp, c.mlp, 1];
                for (i, pair) in widths.windows(2).enumerate() {
                    store.insert(format!("head.{i}.weight"), fan_in_uniform(rng, pair[0], pair[1]));
                    store.insert(format!("head.{i}.bias"), Tensor::zeros(&[pair[1]]));
                }
            }
        }
        store
    }

    fn mlp_head(&self, tape: &mut Tape, params: &ParamBinding, x: Var) -> Result<Var, Error> {
        let mut h = x;
        for i in 0..3 {
            let w = params.var(&format!("head.{i}.weight"))?;
            let b = params.var(&format!("head.{i}.bias"))?;
            h = linear(tape, h, w, Some(b))?;
            if i < 2 {
                h = tape.silu(h)?;
            }
        }
        Ok(h)
    }

    /// Encodes states that all have `n` humans. CAMRL returns crowd latents
    /// `[m, d_model]`; the baselines return values `[m, 1]`.
    fn encode_group(
        &self,
        tape: &mut Tape,
        params: &ParamBinding,
        group: &[&StateFeatures],
        n: usize,
    ) -> Result<Var, Error> {
        let c = self.config;
        let m = group.len();
        let robot_rows: Vec<f64> = group.iter().flat_map(|s| s.robot).collect();
        let pair_rows = |k: Option<usize>| -> Vec<f64> {
            let mut rows = Vec::with_capacity(m * PAIR_FEATURES);
            for s in group {
                rows.extend_from_slice(&s.robot);
                match k {
                    Some(k) => rows.extend_from_slice(&s.humans[k]),
                    None => rows.extend_from_slice(&[0.0; HUMAN_FEATURES]),
                }
            }
            rows
        };
        let matrix = |data: Vec<f64>, cols: usize| Tensor::new(vec![m, cols], data);
        match c.kind {
            PolicyKind::CadrlMlp => {
                if n == 0 {
                    let x = tape.constant(matrix(pair_rows(None), PAIR_FEATURES)?);
                    return self.mlp_head(tape, params, x);
                }
                let mut cols = Vec::with_capacity(n);
                for k in 0..n {
                    let x = tape.constant(matrix(pair_rows(Some(k)), PAIR_FEATURES)?);
                    cols.push(self.mlp_head(tape, params, x)?);
                }
                let all = tape.concat_cols(&cols)?;
                let flat = tape.reshape(all, vec![m * n, 1])?;
                // the pairwise value against the most critical human
                let vals = tape.value(all).data();
                let pick: Vec<usize> = (0..m)
                    .map(|r| {
                        let row = &vals[r * n..(r + 1) * n];
                        let best = (0..n).fold(0, |b, k| if row[k] < row[b] { k } else { b });
                        r * n + best
                    })
                    .collect();
                Ok(tape.gather_rows(flat, &pick)?)
            }
            PolicyKind::Camrl | PolicyKind::LstmRl => {
                let mut h = tape.constant(Tensor::zeros(&[m, c.hidden]));
                let mut cell = tape.constant(Tensor::zeros(&[m, c.hidden]));
                for k in 0..n {
                    let x = tape.constant(matrix(pair_rows(Some(k)), PAIR_FEATURES)?);
                    let e = linear(tape, x, params.var(EMBED_W)?, Some(params.var(EMBED_B)?))?;
                    let e = tape.silu(e)?;
                    if c.kind == PolicyKind::Camrl {
                        h = self.gru.step(tape, params, e, h)?;
                    } else {
                        (h, cell) = self.lstm.step(tape, params, e, h, cell)?;
                    }
                }
                let robot = tape.constant(matrix(robot_rows, ROBOT_FEATURES)?);
                let joined = tape.concat_cols(&[h, robot])?;
                if c.kind == PolicyKind::Camrl {
                    Ok(linear(tape, joined, params.var(LATENT_W)?, Some(params.var(LATENT_B)?))?)
                } else {
                    self.mlp_head(tape, params, joined)
                }
            }
        }
    }

    /// Per-state encoder output for arbitrary human counts, in input order.
    pub fn encode_states(
        &self,
        tape: &mut Tape,
        params: &ParamBinding,
        states: &[&StateFeatures],
    ) -> Result<Var, Error> {
        if states.is_empty() {
            return Err(Error::Invalid("no states to encode".into()));
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in states.iter().enumerate() {
            groups.entry(s.humans.len()).or_default().push(i);
        }
        if groups.len() == 1 {
            let (&n, _) = groups.iter().next().expect("one group");
            return self.encode_group(tape, params, states, n);
        }
        let mut parts = Vec::with_capacity(groups.len());
        let mut position = vec![0; states.len()];
        let mut offset = 0;
        for (&n, idx) in &groups {
            let members: Vec<&StateFeatures> = idx.iter().map(|&i| states[i]).collect();
            parts.push(self.encode_group(tape, params, &members, n)?);
            for (k, &i) in idx.iter().enumerate() {
                position[i] = offset + k;
            }
            offset += idx.len();
        }
        let stacked = tape.concat_rows(&parts)?;
        Ok(tape.gather_rows(stacked, &position)?)
    }

    /// Temporal value vectors for `states.len() / (T + 1)` windows laid out
    /// window-major. Returns `[windows·(T + 1), 1]`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamBinding, states: &[&StateFeatures]) -> Result<Var, Error> {
        let p = self.config.positions();
        if states.is_empty() || !states.len().is_multiple_of(p) {
            return Err(Error::Invalid(format!("{} states do not form windows of {p}", states.len())));
        }
        let enc = self.encode_states(tape, params, states)?;
        match self.config.kind {
            PolicyKind::Camrl => {
                let seq = self.stack.forward(tape, params, enc, states.len() / p, p, ScanMode::Sequential)?;
                Ok(linear(tape, seq, params.var(HEAD_W)?, Some(params.var(HEAD_B)?))?)
            }
            _ => Ok(enc),
        }
    }

    /// `value_forward` without gradients: one vector of T + 1 values per
    /// window.
    pub fn values(&self, store: &ParamStore, windows: &[Vec<&StateFeatures>]) -> Result<Vec<Vec<f64>>, Error> {
        let flat: Vec<&StateFeatures> = windows.iter().flatten().copied().collect();
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        let out = self.forward(&mut tape, &binding, &flat)?;
        Ok(tape.value(out).data().chunks(self.config.positions()).map(<[f64]>::to_vec).collect())
    }

    /// Final-position value of each window `prefix ++ [candidate]`; `prefix`
    /// holds the T most recent states. Equivalent to [`ValueNet::values`] but
    /// shares the prefix work across candidates.
    pub fn score_next(
        &self,
        store: &ParamStore,
        prefix: &[&StateFeatures],
        candidates: &[&StateFeatures],
    ) -> Result<Vec<f64>, Error> {
        if prefix.len() != self.config.window {
            return Err(Error::Invalid(format!(
                "prefix of {} states, window needs {}",
                prefix.len(),
                self.config.window
            )));
        }
        if candidates.is_empty() {
            return Ok(vec![]);
        }
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        if self.config.kind != PolicyKind::Camrl {
            let v = self.encode_states(&mut tape, &binding, candidates)?;
            return Ok(tape.value(v).data().to_vec());
        }
        let all: Vec<&StateFeatures> = prefix.iter().chain(candidates).copied().collect();
        let enc = self.encode_states(&mut tape, &binding, &all)?;
        let latents = tape.value(enc).data();
        let d = self.config.mamba.d_model;
        let mut state = self.stack.initial_state();
        for t in 0..prefix.len() {
            self.stack.step(store, &mut state, &latents[t * d..(t + 1) * d])?;
        }
        let rows = candidates.len();
        let out = self.stack.step_rows(store, &state, &latents[prefix.len() * d..], rows)?;
        Ok(linear_rows(&out, rows, store.get(HEAD_W)?, Some(store.get(HEAD_B)?)))
    }
}

/// A network together with its weights.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: ValueNet,
    pub params: ParamStore,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Self {
        let net = ValueNet::new(config);
        let params = net.init(rng);
        Self { net, params }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { meta: self.net.config.to_meta(), params: self.params.clone() }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, Error> {
        let config = NetConfig::from_meta(&ckpt.meta)?;
        let net = ValueNet::new(config);
        let expected = net.init(&mut rand::rngs::mock::StepRng::new(0, 0));
        for (name, t) in expected.iter() {
            let got = ckpt.params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Invalid(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if expected.len() != ckpt.params.len() {
            return Err(Error::Invalid(format!(
                "checkpoint holds {} tensors, network has {}",
                ckpt.params.len(),
                expected.len()
            )));
        }
        Ok(Self { net, params: ckpt.params })
    }
}
