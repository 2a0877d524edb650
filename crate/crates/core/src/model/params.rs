//! Named parameter storage and affine layers.

use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numkit::{Tape, Tensor, Var};

/// Index of a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Registers every parameter as a leaf of `tape`.
    pub fn bind(&self, tape: &Tape) -> Bound {
        Bound(self.values.iter().map(|t| tape.leaf(t.clone())).collect())
    }
}

/// Tape handles for a [`ParamStore`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Handles in [`ParamStore`] order, e.g. leaves created by a gradient checker.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// `y = W x (+ b)` applied to every column of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn forward(&self, tape: &Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(bound[self.weight], x)?;
        match self.bias {
            Some(b) => tape.add_col_bias(y, bound[b]),
            None => Ok(y),
        }
    }
}

/// Xavier-uniform weights and zero biases, drawn in creation order.
pub struct Initializer<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Initializer<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Initializer { store, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn matrix(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let rng = &mut self.rng;
        let t = Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound));
        self.store.add(name, t)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(rows, cols))
    }

    pub fn linear(&mut self, name: &str, out: usize, inp: usize, bias: bool) -> Linear {
        let weight = self.matrix(format!("{name}.weight"), out, inp);
        let bias = bias.then(|| self.zeros(format!("{name}.bias"), out, 1));
        Linear { weight, bias }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_bounds_and_determinism() {
        let mut a = ParamStore::new();
        let la = Initializer::new(&mut a, 3).linear("fc", 10, 30, true);
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(a.get(la.weight).data().iter().all(|v| v.abs() < limit));
        assert_eq!(a.get(la.bias.unwrap()), &Tensor::zeros(10, 1));
        let mut b = ParamStore::new();
        Initializer::new(&mut b, 3).linear("fc", 10, 30, true);
        assert_eq!(a, b);
        assert_eq!(a.names(), ["fc.weight", "fc.bias"]);
        assert_eq!(a.scalar_count(), 310);
    }
}
