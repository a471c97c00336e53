use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Real;

/// A named flat parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Shape record of one parameter, as written into checkpoint manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// All parameters of a network, addressed by slot index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<T>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "parameter shape");
        self.params.push(Param {
            name: name.into(),
            shape,
            value,
        });
        self.params.len() - 1
    }

    /// Fan-in-scaled uniform weight in `±sqrt(6 / fan_in)`.
    pub fn add_weight(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> usize {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let value = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.random_range(-bound..bound)))
            .collect();
        self.add(name, vec![fan_in, fan_out], value)
    }

    pub fn add_filled(&mut self, name: impl Into<String>, len: usize, v: f64) -> usize {
        self.add(name, vec![len], vec![T::lit(v); len])
    }

    pub fn get(&self, slot: usize) -> &[T] {
        &self.params[slot].value
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn shapes(&self) -> Vec<ParamShape> {
        self.params
            .iter()
            .map(|p| ParamShape {
                name: p.name.clone(),
                shape: p.shape.clone(),
            })
            .collect()
    }

    pub fn zero_grads(&self) -> GradStore<T> {
        GradStore {
            grads: self.params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    /// All values flattened in slot order.
    pub fn flat_values(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.scalar_count());
        let mut at = 0;
        for p in &mut self.params {
            let n = p.len();
            p.value.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    pub fn fill(&mut self, v: f64) {
        for p in &mut self.params {
            p.value.iter_mut().for_each(|x| *x = T::lit(v));
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: p.value.iter().map(|v| U::lit(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ParamStore`]'s slots.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Real> GradStore<T> {
    pub fn slot_mut(&mut self, slot: usize) -> &mut [T] {
        &mut self.grads[slot]
    }

    pub fn slot(&self, slot: usize) -> &[T] {
        &self.grads[slot]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add(&mut self, other: &GradStore<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn flat(&self) -> Vec<T> {
        self.grads.iter().flat_map(|g| g.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, v| m.max(v.f64().abs()))
    }
}

/// Anything built on a [`ParamStore`].
pub trait Network<T: Real> {
    fn store(&self) -> &ParamStore<T>;
    fn store_mut(&mut self) -> &mut ParamStore<T>;
}
