//! Named parameter and state stores.
//!
//! Parameters live outside any tape; each training step binds them as
//! `requires_grad` leaves, and gradients are collected back in registration
//! order. `StateSet` holds non-trained state (batch-norm running statistics)
//! with the same naming scheme so checkpoints can serialize both uniformly.

use crate::ad::{Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::real::Real;
use rand::Rng;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamKey(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamEntry<T: Real> {
    pub name: String,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ParamSet<T: Real> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamKey {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let key = ParamKey(self.entries.len());
        self.index.insert(name.clone(), key.0);
        self.entries.push(ParamEntry { name, tensor });
        key
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elems(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn get(&self, key: ParamKey) -> &Tensor<T> {
        &self.entries[key.0].tensor
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Tensor<T> {
        &mut self.entries[key.0].tensor
    }

    pub fn key_of(&self, name: &str) -> Option<ParamKey> {
        self.index.get(name).map(|&i| ParamKey(i))
    }

    pub fn set_values(&mut self, key: ParamKey, values: Vec<T>) -> Result<()> {
        let entry = &mut self.entries[key.0];
        if values.len() != entry.tensor.numel() {
            return Err(Error::shape("param_set", format!("size mismatch for {}", entry.name)));
        }
        entry.tensor.values_mut().copy_from_slice(&values);
        Ok(())
    }

    /// Bind every entry as a tape leaf, in registration order.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bound {
        let ids = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone(), requires_grad))
            .collect();
        Bound { ids }
    }
}

/// Tape handles of a bound `ParamSet`, parallel to its entries.
pub struct Bound {
    ids: Vec<TensorId>,
}

impl Bound {
    /// Assemble from explicit handles (test harnesses re-binding leaves).
    pub fn from_ids(ids: Vec<TensorId>) -> Self {
        Bound { ids }
    }

    pub fn id(&self, key: ParamKey) -> TensorId {
        self.ids[key.0]
    }

    pub fn ids(&self) -> &[TensorId] {
        &self.ids
    }
}

/// Gradients for every entry, registration order; zeros for disconnected
/// parameters.
pub fn collect_grads<T: Real>(tape: &Tape<T>, bound: &Bound) -> Vec<Vec<T>> {
    bound.ids.iter().map(|&id| tape.grad_vec(id)).collect()
}

// ───────────────────── non-trained state ─────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateKey(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct StateEntry<T: Real> {
    pub name: String,
    pub values: Vec<T>,
}

/// Running statistics and similar non-trained arrays.
#[derive(Debug, Clone)]
pub struct StateSet<T: Real> {
    entries: Vec<StateEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for StateSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> StateSet<T> {
    pub fn new() -> Self {
        StateSet { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, values: Vec<T>) -> StateKey {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate state name {name}");
        let key = StateKey(self.entries.len());
        self.index.insert(name.clone(), key.0);
        self.entries.push(StateEntry { name, values });
        key
    }

    pub fn entries(&self) -> &[StateEntry<T>] {
        &self.entries
    }

    pub fn get(&self, key: StateKey) -> &[T] {
        &self.entries[key.0].values
    }

    pub fn get_mut(&mut self, key: StateKey) -> &mut Vec<T> {
        &mut self.entries[key.0].values
    }

    /// Exponential moving average update: `s = momentum*s + (1-momentum)*v`.
    pub fn ema_update(&mut self, key: StateKey, new_values: &[T], momentum: f64) {
        let buf = self.get_mut(key);
        for (s, &v) in buf.iter_mut().zip(new_values) {
            *s = T::from_f64(momentum * s.as_f64() + (1.0 - momentum) * v.as_f64());
        }
    }
}

/// Centered uniform fan-in initialization: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_fan_in<T: Real>(
    rng: &mut impl Rng,
    shape: Vec<usize>,
    fan_in: usize,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let values = (0..numel)
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, values).expect("shape/len consistent by construction")
}
