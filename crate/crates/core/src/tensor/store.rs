use std::collections::BTreeMap;

use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named model parameters with their accumulated gradients.
///
/// Insertion order is the canonical parameter order used by optimizers and
/// weight files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, TensorError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    /// Mutable views of a parameter and its gradient, for optimizers.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor, &Tensor) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor) {
        let slot = &mut self.grads[id.0];
        assert_eq!(slot.shape(), grad.shape(), "gradient shape for '{}'", self.names[id.0]);
        for (g, d) in slot.data_mut().iter_mut().zip(grad.data()) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm {
            let scale = max_norm / norm;
            for g in &mut self.grads {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
        }
        norm
    }

    /// Replaces the value of an existing parameter; shapes must agree.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<(), TensorError> {
        let slot = &mut self.values[id.0];
        if slot.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch { op: "set_value", left: slot.shape().to_vec(), right: value.shape().to_vec() });
        }
        *slot = value;
        Ok(())
    }

    /// `(name, value)` pairs in canonical order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Samples a tensor uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn add_and_lookup() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[2, 3])).unwrap();
        let b = store.add("b", Tensor::zeros(&[4])).unwrap();
        assert_eq!(store.id("b"), Some(b));
        assert_eq!(store.name(a), "a");
        assert_eq!(store.num_scalars(), 10);
        assert_eq!(store.len(), 2);
        assert!(!store.is_empty());
        assert_eq!(store.add("a", Tensor::zeros(&[1])).unwrap_err(), TensorError::DuplicateParameter("a".into()));
        assert_eq!(store.ids().collect::<Vec<_>>(), vec![a, b]);
        assert!(store.set_value(b, Tensor::zeros(&[5])).is_err());
        store.set_value(b, Tensor::full(&[4], 2.0)).unwrap();
        assert_eq!(store.value(b).data(), &[2.0; 4]);
        assert_eq!(b.index(), 1);
    }

    #[test]
    fn gradients_accumulate_and_clip() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[2])).unwrap();
        store.accumulate_grad(a, &Tensor::vector(vec![3.0, 0.0]));
        store.accumulate_grad(a, &Tensor::vector(vec![0.0, 4.0]));
        assert_eq!(store.grad(a).data(), &[3.0, 4.0]);
        assert_eq!(store.clip_grad_norm(10.0), 5.0);
        assert_eq!(store.grad(a).data(), &[3.0, 4.0]);
        assert_eq!(store.clip_grad_norm(1.0), 5.0);
        assert!((store.grad_norm() - 1.0).abs() < 1e-15);
        store.zero_grad();
        assert_eq!(store.grad(a).data(), &[0.0, 0.0]);
    }

    #[test]
    fn uniform_init_is_bounded_and_seeded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let t1 = init_uniform(&mut r1, &[16, 4], 16);
        let t2 = init_uniform(&mut r2, &[16, 4], 16);
        assert_eq!(t1, t2);
        assert!(t1.data().iter().all(|x| x.abs() <= 0.25));
    }
}
