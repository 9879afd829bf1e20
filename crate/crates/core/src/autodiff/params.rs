use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense array of 64-bit reals with a same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffArray {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
}

impl DiffArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.contains(&0) || len != values.len() {
            return Err(Error::shape("DiffArray::new", &shape, &[values.len()]));
        }
        Ok(Self {
            grad: vec![0.0; len],
            shape,
            values,
            requires_grad: true,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len]).expect("zero-sized dimension")
    }

    /// Uniform initialization in `[-bound, bound)`.
    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let len: usize = shape.iter().product();
        let values = (0..len)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self::new(shape, values).expect("zero-sized dimension")
    }

    pub fn frozen(mut self) -> Self {
        self.requires_grad = false;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: IndexMap<String, DiffArray>,
    rng_seed: u64,
}

impl ParameterStore {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            params: IndexMap::new(),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn insert(&mut self, name: impl Into<String>, array: DiffArray) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        self.params.insert(name, array);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&DiffArray> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DiffArray> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DiffArray)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut DiffArray)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.params.values().map(DiffArray::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(DiffArray::zero_grad);
    }

    /// Moves every parameter of `other` into `self`. Names must not collide.
    pub fn merge(&mut self, other: ParameterStore) -> Result<()> {
        for (name, array) in other.params {
            self.insert(name, array)?;
        }
        Ok(())
    }

    /// A copy in which nothing requires gradients, for using one model's
    /// parameters as fixed inputs while training another.
    pub fn frozen_copy(&self) -> ParameterStore {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.clone().frozen()))
                .collect(),
            rng_seed: self.rng_seed,
        }
    }

    /// Parameters whose name starts with `prefix`, in order.
    pub fn with_prefix(&self, prefix: &str) -> ParameterStore {
        let params = self
            .params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        ParameterStore {
            params,
            rng_seed: self.rng_seed,
        }
    }

    pub fn max_abs_value(&self) -> f64 {
        self.params
            .values()
            .flat_map(|p| p.values.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_grad(&self) -> f64 {
        self.params
            .values()
            .flat_map(|p| p.grad.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Clamps every gradient entry into `[lo, hi]`.
    pub fn clip_gradients(&mut self, lo: f64, hi: f64) -> Result<()> {
        check_bounds(lo, hi)?;
        for p in self.params.values_mut().filter(|p| p.requires_grad) {
            p.grad.iter_mut().for_each(|g| *g = g.clamp(lo, hi));
        }
        Ok(())
    }

    /// Clamps every trainable weight into `[lo, hi]`.
    pub fn clip_weights(&mut self, lo: f64, hi: f64) -> Result<()> {
        check_bounds(lo, hi)?;
        for p in self.params.values_mut().filter(|p| p.requires_grad) {
            p.values.iter_mut().for_each(|w| *w = w.clamp(lo, hi));
        }
        Ok(())
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidBounds { lo, hi });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, values: Vec<f64>) -> ParameterStore {
        let mut store = ParameterStore::new(0);
        let n = values.len();
        store.insert(name, DiffArray::new(vec![n], values).unwrap()).unwrap();
        store
    }

    #[test]
    fn clip_gradients_clamps_entries() {
        let mut store = store_with("w", vec![0.0; 3]);
        store
            .get_mut("w")
            .unwrap()
            .grad_mut()
            .copy_from_slice(&[-2.0, 0.5, 3.0]);
        store.clip_gradients(-1.0, 1.0).unwrap();
        assert_eq!(store.get("w").unwrap().grad(), &[-1.0, 0.5, 1.0]);
    }

    #[test]
    fn clip_weights_inside_bounds_is_identity() {
        let values = vec![0.01, -0.0999, 0.1, -0.1, 1e-300];
        let mut store = store_with("w", values.clone());
        store.clip_weights(-0.1, 0.1).unwrap();
        let after = store.get("w").unwrap().values();
        for (a, b) in after.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn clip_weights_bounds_max_abs() {
        let mut store = store_with("w", vec![-3.0, 0.2, 0.05, 7.5]);
        store.clip_weights(-0.1, 0.1).unwrap();
        assert!(store.max_abs_value() <= 0.1);
    }

    #[test]
    fn inverted_bounds_rejected() {
        let mut store = store_with("w", vec![1.0]);
        assert!(matches!(
            store.clip_weights(1.0, -1.0),
            Err(Error::InvalidBounds { .. })
        ));
        assert!(store.clip_gradients(0.5, 0.4).is_err());
    }

    #[test]
    fn zero_grads_resets_every_entry() {
        let mut store = store_with("w", vec![1.0, 2.0]);
        store.get_mut("w").unwrap().grad_mut()[1] = 4.0;
        store.zero_grads();
        assert!(store.get("w").unwrap().grad().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicate_names_rejected_and_order_kept() {
        let mut store = ParameterStore::new(7);
        for name in ["b", "a", "c"] {
            store.insert(name, DiffArray::zeros(vec![1])).unwrap();
        }
        assert!(store.insert("a", DiffArray::zeros(vec![1])).is_err());
        assert_eq!(store.names().collect::<Vec<_>>(), ["b", "a", "c"]);
    }
}
