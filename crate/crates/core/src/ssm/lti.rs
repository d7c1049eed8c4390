//! Time-invariant diagonal SSMs: zero-order-hold discretisation, the
//! recurrent form and the convolutional form.

use rustfft::{num_complex::Complex, FftPlanner};

use super::SsmError;

/// Continuous single-input single-output system with diagonal state matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSsm {
    /// Diagonal of A; entries must be ≤ 0.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSsm {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

/// Zero-order hold for one diagonal entry: `(exp(Δa), (exp(Δa) − 1)/a · b)`,
/// with the `a → 0` limit `(1, Δb)`.
pub fn zoh_scalar(a: f64, b: f64, step: f64) -> Result<(f64, f64), SsmError> {
    if !(step > 0.0) {
        return Err(SsmError::InvalidStep(step));
    }
    if a > 0.0 || !a.is_finite() {
        return Err(SsmError::Unstable(a));
    }
    if a == 0.0 {
        return Ok((1.0, step * b));
    }
    let x = step * a;
    Ok((x.exp(), x.exp_m1() / a * b))
}

pub fn discretize_zoh(a: &[f64], b: &[f64], step: f64) -> Result<(Vec<f64>, Vec<f64>), SsmError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SsmError::Length { expected: a.len(), got: b.len() });
    }
    let mut a_bar = Vec::with_capacity(a.len());
    let mut b_bar = Vec::with_capacity(a.len());
    for (&ai, &bi) in a.iter().zip(b) {
        let (x, y) = zoh_scalar(ai, bi, step)?;
        a_bar.push(x);
        b_bar.push(y);
    }
    Ok((a_bar, b_bar))
}

impl LtiSsm {
    pub fn state_size(&self) -> usize {
        self.a.len()
    }

    pub fn discretize(&self) -> Result<DiscreteSsm, SsmError> {
        if self.c.len() != self.a.len() {
            return Err(SsmError::Length { expected: self.a.len(), got: self.c.len() });
        }
        let (a_bar, b_bar) = discretize_zoh(&self.a, &self.b, self.step)?;
        Ok(DiscreteSsm { a_bar, b_bar, c: self.c.clone(), d: self.d })
    }
}

impl DiscreteSsm {
    /// `x_n = Ā x_{n−1} + B̄ u_n`, `y_n = C x_n + D u_n`, from `x_0 = 0`.
    pub fn recurrent(&self, u: &[f64]) -> Vec<f64> {
        let mut state = vec![0.0; self.a_bar.len()];
        u.iter()
            .map(|&un| {
                let mut y = self.d * un;
                for ((x, (&a, &b)), &c) in state.iter_mut().zip(self.a_bar.iter().zip(&self.b_bar)).zip(&self.c) {
                    *x = a * *x + b * un;
                    y += c * *x;
                }
                y
            })
            .collect()
    }

    /// `K̄[i] = C Āⁱ B̄` for `i < len`.
    pub fn conv_kernel(&self, len: usize) -> Result<Vec<f64>, SsmError> {
        if len < 1 {
            return Err(SsmError::Length { expected: 1, got: 0 });
        }
        let mut powers: Vec<f64> = self.c.iter().zip(&self.b_bar).map(|(c, b)| c * b).collect();
        let mut kernel = Vec::with_capacity(len);
        for _ in 0..len {
            kernel.push(powers.iter().sum());
            for (p, a) in powers.iter_mut().zip(&self.a_bar) {
                *p *= a;
            }
        }
        Ok(kernel)
    }
}

/// Sequences longer than this are convolved through the FFT.
pub const DIRECT_CONV_MAX_LEN: usize = 256;

/// Causal convolution `y = K̄ ∗ u + D u`.
pub fn conv_apply(kernel: &[f64], u: &[f64], d: f64) -> Result<Vec<f64>, SsmError> {
    if kernel.len() != u.len() {
        return Err(SsmError::Length { expected: u.len(), got: kernel.len() });
    }
    let conv = if u.len() <= DIRECT_CONV_MAX_LEN { direct_causal_conv(kernel, u) } else { fft_causal_conv(kernel, u) };
    Ok(conv.iter().zip(u).map(|(c, &x)| c + d * x).collect())
}

pub fn direct_causal_conv(kernel: &[f64], u: &[f64]) -> Vec<f64> {
    (0..u.len()).map(|n| (0..=n).map(|i| kernel[i] * u[n - i]).sum()).collect()
}

pub fn fft_causal_conv(kernel: &[f64], u: &[f64]) -> Vec<f64> {
    let len = u.len();
    let size = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let mut k = pad(kernel);
    let mut x = pad(u);
    forward.process(&mut k);
    forward.process(&mut x);
    let mut prod: Vec<Complex<f64>> = k.iter().zip(&x).map(|(a, b)| a * b).collect();
    inverse.process(&mut prod);
    prod[..len].iter().map(|c| c.re / size as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zoh_examples() {
        assert_eq!(zoh_scalar(0.0, 1.0, 0.5).unwrap(), (1.0, 0.5));
        let (a, b) = zoh_scalar(-1.0, 1.0, 1.0).unwrap();
        assert!(close(a, (-1.0f64).exp(), 1e-15) && close(b, 1.0 - (-1.0f64).exp(), 1e-15));
        assert!(close(a, 0.36788, 1e-5) && close(b, 0.63212, 1e-5));
        let (a, b) = zoh_scalar(-2.0, 3.0, 0.1).unwrap();
        assert!(close(a, 0.81873, 1e-5), "{a}");
        assert!(close(b, 0.27190, 1e-5), "{b}");
        assert!(matches!(zoh_scalar(-1.0, 1.0, 0.0), Err(SsmError::InvalidStep(_))));
        assert!(matches!(zoh_scalar(-1.0, 1.0, -0.1), Err(SsmError::InvalidStep(_))));
    }

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> DiscreteSsm {
        DiscreteSsm { a_bar: vec![a], b_bar: vec![b], c: vec![c], d }
    }

    #[test]
    fn recurrent_examples() {
        assert_eq!(scalar(0.0, 1.0, 1.0, 0.0).recurrent(&[5.0, 7.0]), vec![5.0, 7.0]);
        assert_eq!(scalar(0.5, 1.0, 1.0, 0.0).recurrent(&[1.0, 0.0, 0.0]), vec![1.0, 0.5, 0.25]);
        assert_eq!(scalar(0.3, 1.0, 0.0, 2.0).recurrent(&[1.0, 2.0, 3.0]), vec![2.0, 4.0, 6.0]);
        assert!(scalar(0.3, 1.0, 1.0, 1.0).recurrent(&[]).is_empty());
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(scalar(0.5, 1.0, 1.0, 0.0).conv_kernel(3).unwrap(), vec![1.0, 0.5, 0.25]);
        assert_eq!(scalar(0.5, 1.0, 0.0, 0.0).conv_kernel(3).unwrap(), vec![0.0; 3]);
        assert_eq!(scalar(1.0, 1.0, 1.0, 0.0).conv_kernel(4).unwrap(), vec![1.0; 4]);
        assert!(scalar(1.0, 1.0, 1.0, 0.0).conv_kernel(0).is_err());
    }

    #[test]
    fn conv_apply_examples() {
        let y = conv_apply(&[1.0, 0.5, 0.25], &[1.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(y, vec![1.0, 0.5, 0.25]);
        assert_eq!(conv_apply(&[1.0, 0.5, 0.25], &[0.0; 3], 3.0).unwrap(), vec![0.0; 3]);
        assert!(conv_apply(&[1.0, 0.5], &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn fft_path_matches_direct() {
        let kernel: Vec<f64> = (0..300).map(|i| 0.99f64.powi(i) * ((i as f64) * 0.1).cos()).collect();
        let u: Vec<f64> = (0..300).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect();
        let a = direct_causal_conv(&kernel, &u);
        let b = fft_causal_conv(&kernel, &u);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}
