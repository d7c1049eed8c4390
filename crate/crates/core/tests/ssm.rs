use camrl::numerics::layers::softplus;
use camrl::numerics::{grad_check, ParamStore, Tape, Tensor};
use camrl::ssm::{DiscreteSsm, LtiSsm, MambaBlock, MambaConfig, MambaStack, ScanMode, SelectiveSsm, SsmError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_lti(rng: &mut ChaCha8Rng, n: usize) -> LtiSsm {
    LtiSsm {
        a: (0..n).map(|_| -rng.gen_range(0.05..3.0)).collect(),
        b: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        c: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        d: rng.gen_range(-1.0..1.0),
        step: rng.gen_range(0.01..0.5),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn conv_and_recurrent_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(1..=16);
        let len = rng.gen_range(1..=128);
        let sys = random_lti(&mut rng, n).discretize().unwrap();
        let u: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rec = sys.recurrent(&u);
        let kernel = sys.conv_kernel(len).unwrap();
        let conv = camrl::ssm::conv_apply(&kernel, &u, sys.d).unwrap();
        let scale = rec.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for (a, b) in rec.iter().zip(&conv) {
            assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn conv_impulse_and_zero_input() {
    let sys = DiscreteSsm { a_bar: vec![0.5], b_bar: vec![1.0], c: vec![1.0], d: 0.0 };
    let k = sys.conv_kernel(3).unwrap();
    assert_eq!(camrl::ssm::conv_apply(&k, &[1.0, 0.0, 0.0], 0.0).unwrap(), vec![1.0, 0.5, 0.25]);
    assert_eq!(camrl::ssm::conv_apply(&k, &[0.0; 3], 0.0).unwrap(), vec![0.0; 3]);
}

/// Step-by-step transcription of the selective recurrence, reading the
/// layer's parameters directly.
fn literal_selective(
    store: &ParamStore,
    prefix: &str,
    x: &Tensor,
    batch: usize,
    len: usize,
    channels: usize,
    state: usize,
    rank: usize,
) -> Vec<f64> {
    let get = |s: &str| store.get(&format!("{prefix}.{s}")).unwrap().data().to_vec();
    let (wx, bx, wdt, bdt, a_log, dskip) =
        (get("x_proj.weight"), get("x_proj.bias"), get("dt_proj.weight"), get("dt_proj.bias"), get("A_log"), get("D"));
    let pw = rank + 2 * state;
    let mut y = vec![0.0; batch * len * channels];
    for b in 0..batch {
        let mut h = vec![vec![0.0; state]; channels];
        for t in 0..len {
            let row = b * len + t;
            let xt = &x.data()[row * channels..(row + 1) * channels];
            let mut proj = bx.clone();
            for j in 0..pw {
                for i in 0..channels {
                    proj[j] += xt[i] * wx[i * pw + j];
                }
            }
            for d in 0..channels {
                let mut pre = bdt[d];
                for r in 0..rank {
                    pre += proj[r] * wdt[r * channels + d];
                }
                let dt = softplus(pre);
                let mut out = dskip[d] * xt[d];
                for n in 0..state {
                    let a = -a_log[d * state + n].exp();
                    let bn = proj[rank + n];
                    let cn = proj[rank + state + n];
                    h[d][n] = (dt * a).exp() * h[d][n] + dt * bn * xt[d];
                    out += cn * h[d][n];
                }
                y[row * channels + d] = out;
            }
        }
    }
    y
}

fn init_selective(rng: &mut ChaCha8Rng, d: usize, n: usize, r: usize) -> (SelectiveSsm, ParamStore) {
    let layer = SelectiveSsm::new("s6", d, n, r);
    let mut store = ParamStore::new();
    layer.init(&mut store, rng, 1e-3, 0.1);
    // non-trivial biases and skip so every path is exercised
    for name in ["s6.x_proj.bias", "s6.D"] {
        let t = store.get_mut(name).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    (layer, store)
}

#[test]
fn selective_scan_matches_literal_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (layer, store) = init_selective(&mut rng, 2, 3, 1);
        let x = random_tensor(&mut rng, &[4, 2], 1.0);
        let y = layer.apply(&store, &x, 1, 4, ScanMode::Sequential).unwrap();
        let oracle = literal_selective(&store, "s6", &x, 1, 4, 2, 3, 1);
        for (a, b) in y.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn input_independent_projections_reduce_to_lti() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (dc, ns, len) = (3, 4, 20);
    let (layer, mut store) = init_selective(&mut rng, dc, ns, 1);
    layer.zero_projections(&mut store);
    let bias: Vec<f64> = (0..1 + 2 * ns).map(|_| rng.gen_range(-1.0..1.0)).collect();
    store.insert("s6.x_proj.bias", Tensor::vector(bias.clone()));
    let x = random_tensor(&mut rng, &[len, dc], 1.0);
    let y = layer.apply(&store, &x, 1, len, ScanMode::Sequential).unwrap();

    let a_log = store.get("s6.A_log").unwrap().data().to_vec();
    let dt_bias = store.get("s6.dt_proj.bias").unwrap().data().to_vec();
    let dskip = store.get("s6.D").unwrap().data().to_vec();
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
            assert!((y.data()[t * dc + d] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_input_with_zero_biases_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layer = SelectiveSsm::new("s6", 4, 3, 1);
    let mut store = ParamStore::new();
    layer.init(&mut store, &mut rng, 1e-3, 0.1);
    let y = layer.apply(&store, &Tensor::zeros(&[2 * 5, 4]), 2, 5, ScanMode::Sequential).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn associative_scan_matches_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let (b, l, d, n) = (rng.gen_range(1..=2), rng.gen_range(1..=64), rng.gen_range(1..=4), rng.gen_range(1..=8));
        let (layer, store) = init_selective(&mut rng, d, n, 1);
        let x = random_tensor(&mut rng, &[b * l, d], 2.0);
        let seq = layer.apply(&store, &x, b, l, ScanMode::Sequential).unwrap();
        let par = layer.apply(&store, &x, b, l, ScanMode::Associative).unwrap();
        assert!(seq.max_abs_diff(&par) < 1e-10);
    }
}

#[test]
fn recurrent_step_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (layer, store) = init_selective(&mut rng, 3, 5, 2);
    let x = random_tensor(&mut rng, &[7, 3], 1.0);
    let y = layer.apply(&store, &x, 1, 7, ScanMode::Sequential).unwrap();
    let mut h = layer.initial_state();
    for t in 0..7 {
        let row = layer.step(&store, &mut h, &x.data()[t * 3..(t + 1) * 3]).unwrap();
        for d in 0..3 {
            assert!((row[d] - y.data()[t * 3 + d]).abs() < 1e-12);
        }
    }
}

#[test]
fn selective_scan_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..5 {
        let (layer, store) = init_selective(&mut rng, 3, 2, 1);
        let x = random_tensor(&mut rng, &[2 * 4, 3], 1.0);
        let weights = random_tensor(&mut rng, &[8, 3], 1.0);
        // gradient wrt the input
        let report = grad_check(
            |tape, xv| {
                let binding = store.bind(tape);
                let y = layer.forward(tape, &binding, xv, 2, 4, ScanMode::Sequential).map_err(unwrap_num)?;
                let w = tape.constant(weights.clone());
                let p = tape.mul(y, w)?;
                tape.sum(p)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{}", report.max_relative_error);

        // gradient wrt every parameter, one tensor at a time
        for name in layer.param_names() {
            let p0 = store.get(name).unwrap().clone();
            let report = grad_check(
                |tape, pv| {
                    let mut binding = store.bind(tape);
                    binding.set(name, pv);
                    let xv = tape.constant(x.clone());
                    let y = layer.forward(tape, &binding, xv, 2, 4, ScanMode::Sequential).map_err(unwrap_num)?;
                    let w = tape.constant(weights.clone());
                    let p = tape.mul(y, w)?;
                    tape.sum(p)
                },
                &p0,
                1e-5,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{name}: {}", report.max_relative_error);
        }
    }
}

fn unwrap_num(e: SsmError) -> camrl::numerics::NumericsError {
    match e {
        SsmError::Numerics(n) => n,
        other => camrl::numerics::NumericsError::Invalid(other.to_string()),
    }
}

fn small_config() -> MambaConfig {
    MambaConfig { d_model: 4, d_state: 3, expand: 2, conv_width: 3, dt_rank: 1, ..Default::default() }
}

#[test]
fn mamba_block_shape_and_zero_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let block = MambaBlock::new("blk", small_config());
    let mut store = ParamStore::new();
    block.init(&mut store, &mut rng);
    for (b, l) in [(1, 1), (2, 5), (3, 8)] {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        let x = tape.constant(random_tensor(&mut rng, &[b * l, 4], 1.0));
        let y = block.forward(&mut tape, &binding, x, b, l, ScanMode::Sequential).unwrap();
        assert_eq!(tape.value(y).shape(), &[b * l, 4]);
        let z = tape.constant(Tensor::zeros(&[b * l, 4]));
        let y = block.forward(&mut tape, &binding, z, b, l, ScanMode::Sequential).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }
    let mut tape = Tape::new();
    let binding = store.bind(&mut tape);
    let bad = tape.constant(Tensor::zeros(&[2, 5]));
    assert!(matches!(block.forward(&mut tape, &binding, bad, 1, 2, ScanMode::Sequential), Err(SsmError::Width { .. })));
}

#[test]
fn mamba_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let block = MambaBlock::new("blk", small_config());
    let mut store = ParamStore::new();
    block.init(&mut store, &mut rng);
    let x = random_tensor(&mut rng, &[2 * 3, 4], 1.0);
    let weights = random_tensor(&mut rng, &[6, 4], 1.0);
    let report = grad_check(
        |tape, xv| {
            let binding = store.bind(tape);
            let y = block.forward(tape, &binding, xv, 2, 3, ScanMode::Sequential).map_err(unwrap_num)?;
            let w = tape.constant(weights.clone());
            let p = tape.mul(y, w)?;
            tape.sum(p)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(report.max_relative_error < 1e-4, "{}", report.max_relative_error);
}

#[test]
fn stack_requires_four_blocks() {
    let blocks = (0..3).map(|i| MambaBlock::new(&format!("b{i}"), small_config())).collect();
    assert!(matches!(MambaStack::from_blocks(blocks), Err(SsmError::BlockCount(3))));
}

#[test]
fn stack_with_zero_projections_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let stack = MambaStack::new("m", small_config());
    let mut store = ParamStore::new();
    stack.init(&mut store, &mut rng);
    for b in stack.blocks() {
        b.zero_projections(&mut store);
    }
    for len in [1, 8, 32] {
        let x = random_tensor(&mut rng, &[len, 4], 1.0);
        let y = stack.apply(&store, &x, 1, len).unwrap();
        assert_eq!(y, x);
    }
}

#[test]
fn stack_is_causal_and_steps_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let stack = MambaStack::new("m", small_config());
    let mut store = ParamStore::new();
    stack.init(&mut store, &mut rng);
    let len = 12;
    let x = random_tensor(&mut rng, &[len, 4], 1.0);
    let y = stack.apply(&store, &x, 1, len).unwrap();
    for t in [0, 5, 11] {
        let mut x2 = x.clone();
        for c in 0..4 {
            x2.data_mut()[t * 4 + c] += 0.7;
        }
        let y2 = stack.apply(&store, &x2, 1, len).unwrap();
        for s in 0..t {
            for c in 0..4 {
                assert!((y.data()[s * 4 + c] - y2.data()[s * 4 + c]).abs() <= 1e-12);
            }
        }
        assert!((t..len).any(|s| (0..4).any(|c| y.data()[s * 4 + c] != y2.data()[s * 4 + c])));
    }
    let mut state = stack.initial_state();
    for t in 0..len {
        let row = stack.step(&store, &mut state, &x.data()[t * 4..(t + 1) * 4]).unwrap();
        for c in 0..4 {
            assert!((row[c] - y.data()[t * 4 + c]).abs() < 1e-11);
        }
    }
}

#[test]
fn batched_step_matches_individual_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let stack = MambaStack::new("m", small_config());
    let mut store = ParamStore::new();
    stack.init(&mut store, &mut rng);
    let prefix = random_tensor(&mut rng, &[5, 4], 1.0);
    let mut state = stack.initial_state();
    for t in 0..5 {
        stack.step(&store, &mut state, &prefix.data()[t * 4..(t + 1) * 4]).unwrap();
    }
    let frozen = state.clone();
    let candidates = random_tensor(&mut rng, &[7, 4], 1.0);
    let batched = stack.step_rows(&store, &state, candidates.data(), 7).unwrap();
    assert_eq!(state, frozen);
    for r in 0..7 {
        let mut s = state.clone();
        let row = stack.step(&store, &mut s, &candidates.data()[r * 4..(r + 1) * 4]).unwrap();
        for c in 0..4 {
            assert!((row[c] - batched[r * 4 + c]).abs() < 1e-12);
        }
    }
}
