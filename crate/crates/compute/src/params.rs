//! Named parameters, initialization and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{ComputeError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
struct Entry<T> {
    value: Tensor<T>,
    trainable: bool,
    m: Vec<T>,
    v: Vec<T>,
}

/// Parameters keyed by dotted path, e.g. `gin.layer0.mlp.w1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    entries: BTreeMap<String, Entry<T>>,
    pub seed: u64,
    pub step: u64,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new(seed: u64) -> Self {
        ParameterStore { entries: BTreeMap::new(), seed, step: 0 }
    }

    /// Adds or replaces a parameter. Moment buffers are reset.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) {
        let n = value.len();
        self.entries.insert(
            name.into(),
            Entry { value, trainable, m: vec![T::zero(); n], v: vec![T::zero(); n] },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, e)| e.trainable).map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>, bool)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value, e.trainable))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// Same parameters in another precision; moment buffers are dropped.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new(self.seed);
        out.step = self.step;
        for (k, e) in &self.entries {
            out.insert(k.clone(), e.value.cast(), e.trainable);
        }
        out
    }

    /// Glorot-uniform `fan_in × fan_out` matrix.
    pub fn init_glorot<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::from_f64(rng.random_range(-limit..limit)))
            .collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data).expect("sized"), true);
    }

    /// `1 × n` row filled with `value` (biases: 0).
    pub fn init_const(&mut self, name: &str, n: usize, value: f64) {
        self.insert(name, Tensor::filled(&[1, n], T::from_f64(value)), true);
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    /// One update of every trainable parameter; increments the step counter.
    pub fn step<T: Scalar>(&self, store: &mut ParameterStore<T>, grads: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        for (name, e) in &store.entries {
            if e.trainable {
                let g = grads.get(name).ok_or_else(|| ComputeError::MissingGradient(name.clone()))?;
                if g.len() != e.value.len() {
                    return Err(ComputeError::ShapeMismatch {
                        op: "adam",
                        detail: format!("{name}: gradient {:?} vs value {:?}", g.shape(), e.value.shape()),
                    });
                }
            }
        }
        store.step += 1;
        let t = store.step as i32;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let c1 = T::from_f64(1.0 - self.beta1.powi(t));
        let c2 = T::from_f64(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::from_f64(self.lr), T::from_f64(self.eps));
        for (name, e) in store.entries.iter_mut().filter(|(_, e)| e.trainable) {
            let g = grads[name].data();
            let vals = e.value.data_mut();
            for k in 0..vals.len() {
                e.m[k] = b1 * e.m[k] + (T::one() - b1) * g[k];
                e.v[k] = b2 * e.v[k] + (T::one() - b2) * g[k] * g[k];
                let mh = e.m[k] / c1;
                let vh = e.v[k] / c2;
                vals[k] = vals[k] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
