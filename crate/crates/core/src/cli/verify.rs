//! Invariant suites behind `camrl verify`. Each suite draws its random cases
//! from a named sub-stream of one seed and reports its worst error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::crowdsim::{
    spawn_scenario, CrowdModel, EpisodeResult, FullAgentState, JointState, ObservableState, OrcaRobot, RobotPolicy,
    ScenarioConfig, ScenarioKind, SimParams, Vec2,
};
use crate::eval::{EpisodeSummary, EvalError, MetricsRecord};
use crate::numerics::layers::{linear, softplus};
use crate::numerics::{grad_check, GradCheckReport, NumericsError, ParamBinding, ParamStore, Tape, Tensor, Var};
use crate::reward::{compute_reward, RewardConfig};
use crate::rng::substream;
use crate::ssm::{discretize_zoh, DiscreteSsm, MambaBlock, MambaConfig, ScanMode, SelectiveSsm, SsmError};
use crate::vlearn::{transform_state, GruCell, Model, NetConfig, PolicyKind, StateFeatures};
use crate::Error;

pub type ZohFn = fn(&[f64], &[f64], f64) -> Result<(Vec<f64>, Vec<f64>), SsmError>;
pub type RewardFn = fn(f64, bool, f64, &RewardConfig) -> f64;
pub type MetricsFn = fn(&[EpisodeSummary]) -> Result<MetricsRecord, EvalError>;

/// The operations under test. Swapping one for a mutant must make the
/// suites that exercise it fail and name it.
#[derive(Clone, Copy)]
pub struct VerifyOps {
    pub discretize_zoh: ZohFn,
    pub compute_reward: RewardFn,
    pub compute_metrics: MetricsFn,
}

impl Default for VerifyOps {
    fn default() -> Self {
        Self { discretize_zoh, compute_reward, compute_metrics: crate::eval::metrics_from_summaries }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    /// Operation whose output is being judged.
    pub op: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// First offending case, serialised for replay.
    pub failure: Option<String>,
    /// Case that produced `max_error`.
    pub worst: Option<String>,
}

impl SuiteReport {
    fn new(suite: &'static str, op: &'static str, tolerance: f64) -> Self {
        Self { suite, op, cases: 0, max_error: 0.0, tolerance, passed: true, failure: None, worst: None }
    }

    /// Records one case; `err` of NaN counts as a failure.
    fn record(&mut self, err: f64, case: impl FnOnce() -> serde_json::Value) {
        self.cases += 1;
        let worse = err > self.max_error || err.is_nan();
        let failing = !(err <= self.tolerance) && self.failure.is_none();
        if !(worse || failing) {
            return;
        }
        let text = case().to_string();
        if worse {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
            self.worst = Some(text.clone());
        }
        if failing {
            self.passed = false;
            self.failure = Some(text);
        }
    }

    fn fail(&mut self, case: serde_json::Value) {
        self.record(f64::INFINITY, || case);
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{status} {:<24} op={:<16} cases={:<7} max_err={:.3e} tol={:.0e}",
            self.suite, self.op, self.cases, self.max_error, self.tolerance
        );
        if let Some(f) = &self.failure {
            s.push_str(&format!("\n     offending case: {f}"));
        }
        s
    }
}

pub const SUITES: [&str; 10] = [
    "ssm_forms",
    "zoh_closed_form",
    "selective_degeneration",
    "associative_scan",
    "grad_linear",
    "grad_gru",
    "grad_mamba",
    "grad_value_forward",
    "reward_transcription",
    "invisible_robot",
];

/// Metric identities are checked separately because they need no sampling
/// beyond a count grid.
pub const METRICS_SUITE: &str = "metric_identities";

pub fn run_named(name: &str, ops: &VerifyOps, seed: u64) -> Result<SuiteReport, Error> {
    let rng = || substream(seed, &format!("verify/{name}"));
    match name {
        "ssm_forms" => ssm_forms(ops, &mut rng()),
        "zoh_closed_form" => zoh_closed_form(ops, &mut rng()),
        "selective_degeneration" => selective_degeneration(&mut rng()),
        "associative_scan" => associative_scan(&mut rng()),
        "grad_linear" => grad_linear(&mut rng()),
        "grad_gru" => grad_gru(&mut rng()),
        "grad_mamba" => grad_mamba(&mut rng()),
        "grad_value_forward" => grad_value_forward(&mut rng()),
        "reward_transcription" => reward_transcription(ops, &mut rng()),
        "invisible_robot" => invisible_robot(&SimParams::default()),
        METRICS_SUITE => metric_identities(ops),
        other => Err(Error::Invalid(format!("unknown verify suite {other:?}"))),
    }
}

/// Every suite, in a fixed order.
pub fn run_all(ops: &VerifyOps, seed: u64) -> Result<Vec<SuiteReport>, Error> {
    SUITES.iter().chain([&METRICS_SUITE]).map(|s| run_named(s, ops, seed)).collect()
}

fn to_num(e: SsmError) -> NumericsError {
    match e {
        SsmError::Numerics(n) => n,
        other => NumericsError::Invalid(other.to_string()),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape matches data")
}

/// `Σ w ⊙ y` so that every output entry contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape, y: Var, w: &Tensor) -> Result<Var, NumericsError> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(y, wv)?;
    tape.sum(p)
}

const FD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn record_grad(report: &mut SuiteReport, what: &str, r: Result<GradCheckReport, NumericsError>) {
    match r {
        Ok(r) => report.record(r.max_relative_error, || {
            json!({"wrt": what, "index": r.worst_index, "analytic": r.analytic[r.worst_index], "numeric": r.numeric[r.worst_index]})
        }),
        Err(e) => report.fail(json!({"wrt": what, "error": e.to_string()})),
    }
}

/// Convolutional and recurrent outputs of random stable diagonal systems.
fn ssm_forms(ops: &VerifyOps, rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("ssm_forms", "discretize_zoh", 1e-8);
    const LEN: usize = 64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=16);
        let a: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.05..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = rng.gen_range(-1.0..1.0);
        let step = rng.gen_range(0.01..0.5);
        let u: Vec<f64> = (0..LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a_bar, b_bar) = match (ops.discretize_zoh)(&a, &b, step) {
            Ok(x) => x,
            Err(e) => {
                rep.fail(json!({"a": a, "b": b, "step": step, "error": e.to_string()}));
                continue;
            }
        };
        let sys = DiscreteSsm { a_bar, b_bar, c: c.clone(), d };
        let rec = sys.recurrent(&u);
        let conv = crate::ssm::conv_apply(&sys.conv_kernel(LEN)?, &u, d)?;
        let scale = rec.iter().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
        let err = rec.iter().zip(&conv).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
        rep.record(err, || json!({"a": a, "b": b, "c": c, "d": d, "step": step, "u": u}));
    }
    Ok(rep)
}

/// Closed forms `Ā = e^{aΔ}`, `B̄ = (e^{aΔ} − 1)/a · b`, written out with
/// plain `exp` rather than the library's `exp_m1`.
fn zoh_closed_form(ops: &VerifyOps, rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("zoh_closed_form", "discretize_zoh", 1e-12);
    let mut cases: Vec<(f64, f64, f64)> = vec![(-1.0, 1.0, 1.0), (-2.0, 0.5, 0.25), (-0.5, -3.0, 2.0), (0.0, 1.5, 0.3)];
    cases.extend((0..200).map(|_| (-rng.gen_range(0.01..5.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.01..2.0))));
    for (a, b, step) in cases {
        let (want_a, want_b) =
            if a == 0.0 { (1.0, step * b) } else { ((a * step).exp(), ((a * step).exp() - 1.0) / a * b) };
        let err = match (ops.discretize_zoh)(&[a], &[b], step) {
            Ok((x, y)) if x.len() == 1 && y.len() == 1 => (x[0] - want_a).abs().max((y[0] - want_b).abs()),
            Ok(_) => f64::INFINITY,
            Err(_) => f64::INFINITY,
        };
        rep.record(err, || json!({"a": a, "b": b, "step": step, "want": [want_a, want_b]}));
    }
    Ok(rep)
}

fn init_selective(rng: &mut ChaCha8Rng, d: usize, n: usize) -> (SelectiveSsm, ParamStore) {
    let layer = SelectiveSsm::new("s6", d, n, 1);
    let mut store = ParamStore::new();
    layer.init(&mut store, rng, 1e-3, 0.1);
    for name in ["s6.x_proj.bias", "s6.D"] {
        if let Ok(t) = store.get_mut(name) {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    (layer, store)
}

/// With zero input weights in the projections, Δ, B and C are constants and
/// the selective scan must equal a time-invariant recurrence per channel.
fn selective_degeneration(rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("selective_degeneration", "selective_scan", 1e-10);
    for _ in 0..100 {
        let (dc, ns, len) = (rng.gen_range(1..=4), rng.gen_range(1..=8), rng.gen_range(1..=32));
        let (layer, mut store) = init_selective(rng, dc, ns);
        layer.zero_projections(&mut store);
        let bias: Vec<f64> = (0..1 + 2 * ns).map(|_| rng.gen_range(-1.0..1.0)).collect();
        store.insert("s6.x_proj.bias", Tensor::vector(bias.clone()));
        let x = random_tensor(rng, &[len, dc], 1.0);
        let y = layer.apply(&store, &x, 1, len, ScanMode::Sequential)?;
        let a_log = store.get("s6.A_log")?.data().to_vec();
        let dt_bias = store.get("s6.dt_proj.bias")?.data().to_vec();
        let dskip = store.get("s6.D")?.data().to_vec();
        let mut err: f64 = 0.0;
        for d in 0..dc {
            let dt = softplus(dt_bias[d]);
            let sys = DiscreteSsm {
                a_bar: (0..ns).map(|n| (-dt * a_log[d * ns + n].exp()).exp()).collect(),
                b_bar: (0..ns).map(|n| dt * bias[1 + n]).collect(),
                c: (0..ns).map(|n| bias[1 + ns + n]).collect(),
                d: dskip[d],
            };
            let u: Vec<f64> = (0..len).map(|t| x.data()[t * dc + d]).collect();
            for (t, want) in sys.recurrent(&u).into_iter().enumerate() {
                err = err.max((y.data()[t * dc + d] - want).abs());
            }
        }
        rep.record(err, || json!({"channels": dc, "state": ns, "len": len, "x": x.data()}));
    }
    Ok(rep)
}

fn associative_scan(rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("associative_scan", "associative_scan", 1e-10);
    for _ in 0..100 {
        let (b, l, d, n) = (rng.gen_range(1..=2), rng.gen_range(1..=64), rng.gen_range(1..=4), rng.gen_range(1..=8));
        let (layer, store) = init_selective(rng, d, n);
        let x = random_tensor(rng, &[b * l, d], 2.0);
        let seq = layer.apply(&store, &x, b, l, ScanMode::Sequential)?;
        let par = layer.apply(&store, &x, b, l, ScanMode::Associative)?;
        rep.record(seq.max_abs_diff(&par), || json!({"batch": b, "len": l, "channels": d, "state": n}));
    }
    Ok(rep)
}

fn grad_linear(rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("grad_linear", "linear", GRAD_TOL);
    for _ in 0..20 {
        let (r, i, o) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (x, w, b, out_w) = (
            random_tensor(rng, &[r, i], 1.0),
            random_tensor(rng, &[i, o], 1.0),
            random_tensor(rng, &[o], 1.0),
            random_tensor(rng, &[r, o], 1.0),
        );
        let f = |tape: &mut Tape, xv: Var, wv: Var, bv: Var| -> Result<Var, NumericsError> {
            let y = linear(tape, xv, wv, Some(bv))?;
            weighted_sum(tape, y, &out_w)
        };
        record_grad(
            &mut rep,
            "x",
            grad_check(
                |t, v| {
                    let (w, b) = (t.constant(w.clone()), t.constant(b.clone()));
                    f(t, v, w, b)
                },
                &x,
                FD_STEP,
            ),
        );
        record_grad(
            &mut rep,
            "w",
            grad_check(
                |t, v| {
                    let (x, b) = (t.constant(x.clone()), t.constant(b.clone()));
                    f(t, x, v, b)
                },
                &w,
                FD_STEP,
            ),
        );
        record_grad(
            &mut rep,
            "b",
            grad_check(
                |t, v| {
                    let (x, w) = (t.constant(x.clone()), t.constant(w.clone()));
                    f(t, x, w, v)
                },
                &b,
                FD_STEP,
            ),
        );
    }
    Ok(rep)
}

/// Checks the gradient of `loss` with respect to every tensor of `store`.
fn grad_all_params<F>(rep: &mut SuiteReport, store: &ParamStore, loss: F)
where
    F: Fn(&mut Tape, &ParamBinding) -> Result<Var, NumericsError>,
{
    for (name, value) in store.iter() {
        let r = grad_check(
            |tape, pv| {
                let mut binding = store.bind(tape);
                binding.set(name, pv);
                loss(tape, &binding)
            },
            value,
            FD_STEP,
        );
        record_grad(rep, name, r);
    }
}

fn grad_gru(rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("grad_gru", "gru_cell", GRAD_TOL);
    for _ in 0..20 {
        let (input, hidden, rows) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=3));
        let cell = GruCell::new("g", input, hidden);
        let mut store = ParamStore::new();
        cell.init(&mut store, rng);
        let (x, h0, w) = (
            random_tensor(rng, &[rows, input], 1.0),
            random_tensor(rng, &[rows, hidden], 1.0),
            random_tensor(rng, &[rows, hidden], 1.0),
        );
        // two steps so the recurrent path is exercised too
        let run = |tape: &mut Tape, binding: &ParamBinding, xv: Var, hv: Var| -> Result<Var, NumericsError> {
            let h = cell.step(tape, binding, xv, hv)?;
            let h = cell.step(tape, binding, xv, h)?;
            weighted_sum(tape, h, &w)
        };
        record_grad(
            &mut rep,
            "x",
            grad_check(
                |t, v| {
                    let b = store.bind(t);
                    let h = t.constant(h0.clone());
                    run(t, &b, v, h)
                },
                &x,
                FD_STEP,
            ),
        );
        record_grad(
            &mut rep,
            "h",
            grad_check(
                |t, v| {
                    let b = store.bind(t);
                    let xv = t.constant(x.clone());
                    run(t, &b, xv, v)
                },
                &h0,
                FD_STEP,
            ),
        );
        grad_all_params(&mut rep, &store, |t, b| {
            let (xv, hv) = (t.constant(x.clone()), t.constant(h0.clone()));
            run(t, b, xv, hv)
        });
    }
    Ok(rep)
}

fn grad_mamba(rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("grad_mamba", "mamba_block", GRAD_TOL);
    let config = MambaConfig { d_model: 4, d_state: 3, expand: 2, conv_width: 3, dt_rank: 1, ..Default::default() };
    for _ in 0..20 {
        let block = MambaBlock::new("blk", config);
        let mut store = ParamStore::new();
        block.init(&mut store, rng);
        let (batch, len) = (rng.gen_range(1..=2), rng.gen_range(1..=4));
        let (x, w) = (random_tensor(rng, &[batch * len, 4], 1.0), random_tensor(rng, &[batch * len, 4], 1.0));
        let run = |tape: &mut Tape, binding: &ParamBinding, xv: Var| -> Result<Var, NumericsError> {
            let y = block.forward(tape, binding, xv, batch, len, ScanMode::Sequential).map_err(to_num)?;
            weighted_sum(tape, y, &w)
        };
        record_grad(
            &mut rep,
            "x",
            grad_check(
                |t, v| {
                    let b = store.bind(t);
                    run(t, &b, v)
                },
                &x,
                FD_STEP,
            ),
        );
        grad_all_params(&mut rep, &store, |t, b| {
            let xv = t.constant(x.clone());
            run(t, b, xv)
        });
    }
    Ok(rep)
}

fn random_features(rng: &mut ChaCha8Rng, humans: usize) -> StateFeatures {
    let mut v = || Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
    let mut robot = FullAgentState::new(v(), v(), 0.3, 1.0);
    robot.observable.velocity = v() * 0.2;
    let humans = (0..humans).map(|_| ObservableState { position: v(), velocity: v() * 0.25, radius: 0.3 }).collect();
    transform_state(&JointState { robot, humans })
}

/// The full CAMRL value network with a two-step history and `d_model = 8`.
fn grad_value_forward(rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("grad_value_forward", "value_forward", GRAD_TOL);
    const T: usize = 2;
    let mut config = NetConfig::new(PolicyKind::Camrl);
    config.window = T;
    config.embed = 8;
    config.hidden = 8;
    config.mamba = MambaConfig { d_model: 8, d_state: 4, ..Default::default() };
    for _ in 0..20 {
        let model = Model::new(config, rng);
        let humans = rng.gen_range(1..=3);
        let states: Vec<StateFeatures> = (0..T + 1).map(|_| random_features(rng, humans)).collect();
        let refs: Vec<&StateFeatures> = states.iter().collect();
        let w = random_tensor(rng, &[T + 1, 1], 1.0);
        grad_all_params(&mut rep, &model.params, |t, b| {
            let out = model.net.forward(t, b, &refs).map_err(|e| match e {
                Error::Numerics(n) => n,
                other => NumericsError::Invalid(other.to_string()),
            })?;
            weighted_sum(t, out, &w)
        });
    }
    Ok(rep)
}

/// Independent transcription of the piecewise reward, case by case.
fn literal_reward(d: f64, at_goal: bool, t: f64, c: &RewardConfig) -> f64 {
    if d <= 0.0 {
        return c.collision_penalty;
    }
    if 0.0 < d && d < c.discomfort_radius {
        return (d - c.discomfort_radius) * c.time_step / 2.0;
    }
    if at_goal {
        return c.goal_reward;
    }
    if t >= c.time_limit {
        return c.timeout_penalty;
    }
    0.0
}

fn reward_transcription(ops: &VerifyOps, rng: &mut ChaCha8Rng) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("reward_transcription", "compute_reward", 0.0);
    let cfg = RewardConfig::default();
    let mut cases: Vec<(f64, bool, f64)> = Vec::new();
    for d in [0.0, -0.0, cfg.discomfort_radius, f64::INFINITY, -1.0, 1e-300, 0.19999999999999998] {
        for t in [0.0, cfg.time_limit, cfg.time_limit - cfg.time_step, cfg.time_limit + cfg.time_step] {
            for g in [false, true] {
                cases.push((d, g, t));
            }
        }
    }
    for _ in 0..100_000 {
        let d = match rng.gen_range(0..4) {
            0 => rng.gen_range(-0.5..0.0),
            1 => rng.gen_range(0.0..cfg.discomfort_radius),
            _ => rng.gen_range(0.0..5.0),
        };
        let t = (rng.gen_range(0..=110) as f64) * cfg.time_step;
        cases.push((d, rng.gen_bool(0.3), t));
    }
    for (d, g, t) in cases {
        let (got, want) = ((ops.compute_reward)(d, g, t, &cfg), literal_reward(d, g, t, &cfg));
        let err = if got.to_bits() == want.to_bits() { 0.0 } else { f64::INFINITY };
        rep.record(err, || json!({"separation": d, "at_goal": g, "time": t, "got": got, "want": want}));
    }
    Ok(rep)
}

/// Walks straight at its goal, ignoring everyone.
struct Beeline;

impl RobotPolicy for Beeline {
    fn name(&self) -> &str {
        "beeline"
    }

    fn act(&mut self, s: &JointState) -> Result<Vec2, Error> {
        Ok(s.robot.preferred_velocity())
    }
}

/// Steps two copies of each scenario for the full time limit under different
/// robot policies and demands bit-identical human states throughout.
fn invisible_robot(sim: &SimParams) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("invisible_robot", "world_step", 0.0);
    let steps = (sim.time_limit / sim.time_step).round() as usize;
    for kind in ScenarioKind::ALL {
        for model in CrowdModel::ALL {
            for seed in 0..20 {
                let cfg = ScenarioConfig::new(kind, model, seed);
                let (mut w1, mut w2) = (spawn_scenario(&cfg, sim)?, spawn_scenario(&cfg, sim)?);
                let (mut p1, mut p2) = (OrcaRobot::new(sim.time_step), Beeline);
                let mut worst = 0.0;
                for k in 0..steps {
                    let a1 = p1.act(&w1.joint_state())?;
                    let a2 = p2.act(&w2.joint_state())?;
                    w1.step(a1)?;
                    w2.step(a2)?;
                    let same = w1.humans.iter().zip(&w2.humans).all(|(h1, h2)| {
                        h1.observable.position.x.to_bits() == h2.observable.position.x.to_bits()
                            && h1.observable.position.y.to_bits() == h2.observable.position.y.to_bits()
                            && h1.observable.velocity.x.to_bits() == h2.observable.velocity.x.to_bits()
                            && h1.observable.velocity.y.to_bits() == h2.observable.velocity.y.to_bits()
                    });
                    if !same {
                        worst = f64::INFINITY;
                        rep.record(worst, || json!({"environment": kind.to_string(), "crowd_model": model.to_string(), "seed": seed, "step": k}));
                        break;
                    }
                }
                if worst == 0.0 {
                    rep.record(0.0, || json!(null));
                }
            }
        }
    }
    Ok(rep)
}

fn summary(result: EpisodeResult) -> EpisodeSummary {
    EpisodeSummary { seed: 0, result, elapsed: 10.0, steps: 40, min_separation: None, discomfort_separations: vec![] }
}

/// Rate identity on every count triple with up to 60 episodes and a grid of
/// triples at 600 (the full test protocol), plus the 44-of-50 ratio.
fn metric_identities(ops: &VerifyOps) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new(METRICS_SUITE, "compute_metrics", 0.0);
    let triples = (1..=60usize)
        .flat_map(|n| (0..=n).flat_map(move |s| (0..=n - s).map(move |c| (n, s, c))))
        .chain((0..=600).step_by(7).flat_map(|s| (0..=600 - s).step_by(5).map(move |c| (600, s, c))));
    for (n, s, c) in triples {
        let mut all = vec![summary(EpisodeResult::Success); s];
        all.extend(vec![summary(EpisodeResult::Collision); c]);
        all.extend(vec![summary(EpisodeResult::Timeout); n - s - c]);
        let err = match (ops.compute_metrics)(&all) {
            Ok(m) if m.episodes == n && m.successes == s && m.collisions == c => (m.rate_sum() - 1.0).abs(),
            _ => f64::INFINITY,
        };
        rep.record(err, || json!({"episodes": n, "successes": s, "collisions": c}));
    }
    let mut all = vec![summary(EpisodeResult::Success); 44];
    all.extend(vec![summary(EpisodeResult::Collision); 6]);
    let err = match (ops.compute_metrics)(&all) {
        Ok(m) => (m.success_rate - 0.88).abs(),
        Err(_) => f64::INFINITY,
    };
    rep.record(err, || json!({"episodes": 50, "successes": 44}));
    Ok(rep)
}
