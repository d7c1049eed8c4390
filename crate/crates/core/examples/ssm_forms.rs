//! A diagonal time-invariant SSM computed three ways: the recurrence, a
//! direct causal convolution and an FFT convolution with the same kernel.
use camrl::ssm::{conv_apply, direct_causal_conv, fft_causal_conv, zoh_scalar, LtiSsm};

fn main() -> Result<(), camrl::ssm::SsmError> {
    let (a_bar, b_bar) = zoh_scalar(-1.0, 1.0, 1.0)?;
    println!("ZOH of a=-1, b=1, step=1: Ā = {a_bar:.12} (e^-1), B̄ = {b_bar:.12} (1 - e^-1)");

    let sys = LtiSsm {
        a: vec![-0.5, -1.0, -2.0, -4.0],
        b: vec![1.0, -0.5, 0.25, 1.0],
        c: vec![0.3, 0.7, -1.0, 0.2],
        d: 0.1,
        step: 0.1,
    };
    let disc = sys.discretize()?;
    let len = 256;
    let u: Vec<f64> = (0..len).map(|t| (t as f64 * 0.3).sin() + if t % 17 == 0 { 1.0 } else { 0.0 }).collect();

    let rec = disc.recurrent(&u);
    let kernel = disc.conv_kernel(len)?;
    let conv = conv_apply(&kernel, &u, disc.d)?;
    let direct = direct_causal_conv(&kernel, &u);
    let fft = fft_causal_conv(&kernel, &u);
    let max_diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("recurrent vs convolution:   {:.3e}", max_diff(&rec, &conv));
    println!("direct vs FFT convolution:  {:.3e}", max_diff(&direct, &fft));
    println!("first outputs: {:?}", &rec[..4]);
    Ok(())
}
