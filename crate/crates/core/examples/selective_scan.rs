//! The selective scan in sequential and associative form, and a Mamba stack
//! evaluated over a whole sequence versus one step at a time.
use camrl::numerics::{ParamStore, Tensor};
use camrl::rng::substream;
use camrl::ssm::{MambaConfig, MambaStack, ScanMode, SelectiveSsm};
use rand::Rng;

fn main() -> Result<(), camrl::ssm::SsmError> {
    let mut rng = substream(7, "example");
    let (channels, state, batch, len) = (4, 8, 2, 50);
    let layer = SelectiveSsm::new("s6", channels, state, 1);
    let mut store = ParamStore::new();
    layer.init(&mut store, &mut rng, 1e-3, 0.1);
    let x = Tensor::new(
        vec![batch * len, channels],
        (0..batch * len * channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let seq = layer.apply(&store, &x, batch, len, ScanMode::Sequential)?;
    let par = layer.apply(&store, &x, batch, len, ScanMode::Associative)?;
    println!("selective scan, sequential vs associative: {:.3e}", seq.max_abs_diff(&par));

    let config = MambaConfig { d_model: 8, d_state: 4, ..MambaConfig::default() };
    let stack = MambaStack::new("m", config);
    let mut store = ParamStore::new();
    stack.init(&mut store, &mut rng);
    let len = 12;
    let x = Tensor::new(vec![len, 8], (0..len * 8).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let full = stack.apply(&store, &x, 1, len)?;
    let mut state = stack.initial_state();
    let mut worst: f64 = 0.0;
    for t in 0..len {
        let row = stack.step(&store, &mut state, &x.data()[t * 8..(t + 1) * 8])?;
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - full.data()[t * 8 + c]).abs());
        }
    }
    println!("Mamba stack ({} blocks), full pass vs recurrent steps: {worst:.3e}", stack.blocks().len());
    Ok(())
}
