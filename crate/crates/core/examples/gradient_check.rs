//! Tape gradients against central finite differences for a small GRU
//! unrolled over three steps.
use camrl::numerics::{grad_check, ParamStore, Tensor};
use camrl::rng::substream;
use camrl::vlearn::GruCell;
use rand::Rng;

fn main() -> Result<(), camrl::numerics::NumericsError> {
    let mut rng = substream(3, "example");
    let cell = GruCell::new("gru", 3, 5);
    let mut store = ParamStore::new();
    cell.init(&mut store, &mut rng);
    let mut rand = |r: usize, c: usize| Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let (x, h0, w) = (rand(2, 3)?, rand(2, 5)?, rand(2, 5)?);

    for (name, value) in store.iter() {
        let report = grad_check(
            |tape, p| {
                let mut binding = store.bind(tape);
                binding.set(name, p);
                let (xv, mut h) = (tape.constant(x.clone()), tape.constant(h0.clone()));
                for _ in 0..3 {
                    h = cell.step(tape, &binding, xv, h)?;
                }
                let wv = tape.constant(w.clone());
                let prod = tape.mul(h, wv)?;
                tape.sum(prod)
            },
            value,
            1e-5,
        )?;
        println!("{name:<10} {:>4} entries  max relative error {:.2e}", value.len(), report.max_relative_error);
    }
    Ok(())
}
