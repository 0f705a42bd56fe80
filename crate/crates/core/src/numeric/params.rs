use std::collections::BTreeMap;
use std::sync::Arc;

use super::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    value: Arc<Tensor2>,
    grad: Tensor2,
}

/// Named parameters keyed by dot-separated path, each with a gradient slot
/// of the same shape.
///
/// Iteration is in lexicographic path order, which fixes the order of every
/// reduction that walks the store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
}

/// Gradients keyed by parameter path.
pub type Gradients = BTreeMap<String, Tensor2>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Paths must be unique.
    pub fn insert(&mut self, path: impl Into<String>, value: Tensor2) -> Result<()> {
        let path = path.into();
        if self.slots.contains_key(&path) {
            return Err(Error::Validation(format!("duplicate parameter path `{path}`")));
        }
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.slots.insert(
            path,
            Slot {
                value: Arc::new(value),
                grad,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn contains(&self, path: &str) -> bool {
        self.slots.contains_key(path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), s.value.as_ref()))
    }

    pub fn get(&self, path: &str) -> Result<&Tensor2> {
        self.slot(path).map(|s| s.value.as_ref())
    }

    pub(crate) fn get_shared(&self, path: &str) -> Result<Arc<Tensor2>> {
        self.slot(path).map(|s| Arc::clone(&s.value))
    }

    /// Mutable access to a parameter value. Copies the tensor if a live tape
    /// still holds it.
    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor2> {
        self.slots
            .get_mut(path)
            .map(|s| Arc::make_mut(&mut s.value))
            .ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn set(&mut self, path: &str, value: Tensor2) -> Result<()> {
        let slot = self
            .slots
            .get_mut(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))?;
        if slot.value.shape() != value.shape() {
            return Err(Error::dim("ParamStore::set", slot.value.shape(), value.shape()));
        }
        slot.value = Arc::new(value);
        Ok(())
    }

    pub fn grad(&self, path: &str) -> Result<&Tensor2> {
        self.slot(path).map(|s| &s.grad)
    }

    pub fn zero_grad(&mut self) {
        for s in self.slots.values_mut() {
            s.grad.data_mut().fill(0.0);
        }
    }

    /// Adds `grads` into the gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (path, g) in grads {
            let slot = self
                .slots
                .get_mut(path)
                .ok_or_else(|| Error::UnknownParam(path.clone()))?;
            slot.grad.add_assign(g)?;
        }
        Ok(())
    }

    /// Overwrites every gradient slot; parameters missing from `grads` get zero.
    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        self.zero_grad();
        self.accumulate(grads)
    }

    /// Visits each `(path, value, grad)` triple in path order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor2, &Tensor2)) {
        for (path, slot) in &mut self.slots {
            f(path, Arc::make_mut(&mut slot.value), &slot.grad);
        }
    }

    /// Multiplies every parameter value by `s`.
    pub fn scale_values(&mut self, s: f64) {
        self.for_each_mut(|_, v, _| {
            for x in v.data_mut() {
                *x *= s;
            }
        });
    }

    fn slot(&self, path: &str) -> Result<&Slot> {
        self.slots
            .get(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_path_rejected() {
        let mut s = ParamStore::new();
        s.insert("a.w", Tensor2::zeros(2, 2)).unwrap();
        assert!(s.insert("a.w", Tensor2::zeros(1, 1)).is_err());
    }

    #[test]
    fn grad_slot_shares_shape() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor2::ones(3, 2)).unwrap();
        assert_eq!(s.grad("w").unwrap().shape(), s.get("w").unwrap().shape());
        let mut g = Gradients::new();
        g.insert("w".into(), Tensor2::ones(2, 3));
        assert!(s.accumulate(&g).is_err());
    }

    #[test]
    fn set_rejects_shape_change() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor2::ones(3, 2)).unwrap();
        assert!(s.set("w", Tensor2::ones(2, 3)).is_err());
        assert!(s.set("missing", Tensor2::ones(2, 3)).is_err());
    }
}
