use super::{DiffError, GradStore, Param, ParamStore, Real};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
            step: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam step. A non-finite gradient leaves both the
/// parameter and the state untouched.
pub fn adam_update<T: Real>(param: &mut Param<T>, grad: &[T], state: &mut AdamState<T>) -> Result<(), DiffError> {
    if grad.len() != param.len() || state.first.len() != param.len() {
        return Err(DiffError::WidthMismatch {
            expected: param.len(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(DiffError::NonFiniteGradient(param.name.clone()));
    }
    state.step += 1;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let c1 = T::lit(1.0 - state.beta1.powi(state.step as i32));
    let c2 = T::lit(1.0 - state.beta2.powi(state.step as i32));
    let (lr, eps) = (T::lit(state.lr), T::lit(state.eps));
    for i in 0..param.len() {
        let g = grad[i];
        let m = b1 * state.first[i] + (T::one() - b1) * g;
        let v = b2 * state.second[i] + (T::one() - b2) * g * g;
        state.first[i] = m;
        state.second[i] = v;
        param.value[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
    }
    Ok(())
}

/// Adam over every slot of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        Self {
            states: store.params().iter().map(|p| AdamState::new(p.len(), lr)).collect(),
        }
    }

    /// Applies one step to all parameters, or none if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &GradStore<T>) -> Result<(), DiffError> {
        for (slot, p) in store.params().iter().enumerate() {
            if grads.slot(slot).iter().any(|g| !g.is_finite()) {
                return Err(DiffError::NonFiniteGradient(p.name.clone()));
            }
        }
        for (slot, (p, st)) in store.params_mut().iter_mut().zip(&mut self.states).enumerate() {
            adam_update(p, grads.slot(slot), st)?;
        }
        Ok(())
    }

    pub fn set_lr(&mut self, lr: f64) {
        for st in &mut self.states {
            st.lr = lr;
        }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step)
    }
}
