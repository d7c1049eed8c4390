use std::collections::BTreeMap;

use super::{Grads, NumericsError, Tape, Tensor, Var};

/// Named learnable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumericsError> {
        self.tensors.get(name).ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NumericsError> {
        self.tensors.get_mut(name).ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Records every tensor as a differentiable leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape) -> ParamBinding {
        let vars = self.tensors.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
        ParamBinding { vars }
    }
}

/// Parameter name → tape node, produced by [`ParamStore::bind`].
#[derive(Debug, Clone)]
pub struct ParamBinding {
    vars: BTreeMap<String, Var>,
}

impl ParamBinding {
    pub fn var(&self, name: &str) -> Result<Var, NumericsError> {
        self.vars.get(name).copied().ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    /// Points `name` at another node (used to differentiate with respect to
    /// a substituted input).
    pub fn set(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    /// Gradient for every bound parameter (zeros where it did not participate).
    pub fn collect(&self, grads: &Grads) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(k, &v)| (k.clone(), grads.wrt(v))).collect()
    }
}
