use super::{NumericsError, Tape, Tensor, Var};

/// Denominator floor for relative errors, so coordinates whose true gradient
/// is ~0 are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, floor)`; zero when both are zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the tape gradient of a scalar function against central finite
/// differences `(f(x+h) − f(x−h)) / 2h`, coordinate by coordinate.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericsError>,
{
    if !(1e-6..=1e-4).contains(&h) {
        return Err(NumericsError::Invalid(format!("finite-difference step {h} outside [1e-6, 1e-4]")));
    }
    let eval = |x: &Tensor| -> Result<f64, NumericsError> {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let out = f(&mut tape, v)?;
        let t = tape.value(out);
        if t.len() != 1 {
            return Err(NumericsError::NonScalarLoss { shape: t.shape().to_vec() });
        }
        Ok(t.item())
    };

    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let out = f(&mut tape, v)?;
    let analytic = tape.backward(out)?.wrt(v).into_data();

    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * h));
    }

    let (worst_index, max_relative_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(GradCheckReport { max_relative_error, worst_index, analytic, numeric })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_two() {
        let r = grad_check(
            |t, x| {
                let sq = t.unary(super::super::Unary::Square, x)?;
                t.sum(sq)
            },
            &Tensor::scalar(2.0),
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-6, "{}", r.max_relative_error);
        assert!((r.analytic[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let r = grad_check(|t, _x| Ok(t.constant(Tensor::scalar(3.0))), &Tensor::vector(vec![1.0, 2.0]), 1e-5).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.analytic, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_non_scalar_and_bad_step() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        assert!(matches!(grad_check(|_t, x| Ok(x), &x, 1e-5), Err(NumericsError::NonScalarLoss { .. })));
        assert!(matches!(grad_check(|t, x| t.sum(x), &x, 1e-2), Err(NumericsError::Invalid(_))));
    }
}
