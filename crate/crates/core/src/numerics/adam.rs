use std::collections::BTreeMap;

use super::{NumericsError, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Fails before touching any parameter if a gradient
    /// is non-finite or does not match its parameter's shape.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<(), NumericsError> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(NumericsError::Shape {
                    op: "adam_step",
                    detail: format!("{name}: param {:?} grad {:?}", p.shape(), g.shape()),
                });
            }
            if let Some((index, &value)) = g.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(NumericsError::NonFiniteGradient { name: name.clone(), index, value });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name)?;
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([(name.to_string(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::vector(vec![1.5, -2.0]));
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default());
        let g = BTreeMap::from([("w".to_string(), Tensor::zeros(&[2]))]);
        for _ in 0..5 {
            adam.step(&mut params, &g).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::scalar(0.0));
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        adam.step(&mut params, &one("w", 1.0)).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = -0.1 / (1 + 1e-8)
        let w = params.get("w").unwrap().item();
        assert!((w + 0.1).abs() < 1e-8, "{w}");
    }

    #[test]
    fn identical_params_stay_identical() {
        let mut params = ParamStore::new();
        params.insert("a", Tensor::scalar(0.3));
        params.insert("b", Tensor::scalar(0.3));
        let mut adam = Adam::new(AdamConfig::default());
        for k in 0..10 {
            let g = 0.1 * k as f64 - 0.4;
            let grads = BTreeMap::from([("a".to_string(), Tensor::scalar(g)), ("b".to_string(), Tensor::scalar(g))]);
            adam.step(&mut params, &grads).unwrap();
        }
        assert_eq!(params.get("a").unwrap(), params.get("b").unwrap());
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::scalar(1.0));
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut params, &one("w", f64::NAN)).unwrap_err();
        assert!(matches!(err, NumericsError::NonFiniteGradient { ref name, .. } if name == "w"));
        assert_eq!(params.get("w").unwrap().item(), 1.0);
        assert_eq!(adam.steps(), 0);
    }
}
