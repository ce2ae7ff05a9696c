use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// A learnable tensor with its gradient and AdamW moment estimates.
#[derive(Debug, Clone)]
pub struct Parameter<T = f32> {
    pub name: String,
    /// Position in the owning model's parameter list; indexes [`GradStore`].
    pub id: usize,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub step: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, id: usize, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            id,
            grad: Tensor::zeros(&shape),
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
            value,
            step: 0,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Gradient buffers for every parameter of one model, indexed by
/// [`Parameter::id`]. Kept apart from the parameters so several clips can be
/// differentiated in parallel against a shared read-only model.
#[derive(Debug, Clone)]
pub struct GradStore<T = f32> {
    grads: Vec<Tensor<T>>,
}

impl<T: Real> GradStore<T> {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Parameter<T>>) -> Self {
        let mut grads: Vec<(usize, Tensor<T>)> = params.into_iter().map(|p| (p.id, Tensor::zeros(p.shape()))).collect();
        grads.sort_by_key(|(id, _)| *id);
        debug_assert!(grads.iter().enumerate().all(|(i, (id, _))| i == *id));
        GradStore {
            grads: grads.into_iter().map(|(_, g)| g).collect(),
        }
    }

    pub fn get(&self, id: usize) -> &Tensor<T> {
        &self.grads[id]
    }

    pub fn accumulate(&mut self, id: usize, g: &Tensor<T>) {
        self.grads[id].add_assign(g);
    }

    pub fn accumulate_slice(&mut self, id: usize, g: &[T]) {
        for (a, &b) in self.grads[id].data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Adds `other` in place. Summation order is the caller's responsibility.
    pub fn merge(&mut self, other: &GradStore<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        self.grads.iter_mut().for_each(|g| g.scale(s));
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// One decoupled-weight-decay Adam update of `param` using `param.grad`.
///
/// The decay term uses the pre-update value: `w ← w − lr·(m̂/(√v̂+ε) + λ·w)`.
pub fn adamw_step<T: Real>(
    param: &mut Parameter<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::config(format!("learning rate must be >= 0, got {lr}")));
    }
    if let Some(i) = param.grad.data().iter().position(|g| !g.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite gradient in parameter '{}' at element {i}",
            param.name
        )));
    }
    param.step += 1;
    let t = param.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let (bc1, bc2) = (T::of(bc1), T::of(bc2));
    let (lr_t, eps_t, wd_t) = (T::of(lr), T::of(eps), T::of(weight_decay));

    let grad = param.grad.data();
    let m = param.first_moment.data_mut();
    for (m, &g) in m.iter_mut().zip(grad) {
        *m = b1 * *m + one_b1 * g;
    }
    let v = param.second_moment.data_mut();
    for (v, &g) in v.iter_mut().zip(grad) {
        *v = b2 * *v + one_b2 * g * g;
    }
    let m = param.first_moment.data();
    let v = param.second_moment.data();
    for ((w, &m), &v) in param.value.data_mut().iter_mut().zip(m).zip(v) {
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        *w -= lr_t * (m_hat / (v_hat.sqrt() + eps_t) + wd_t * *w);
    }
    Ok(())
}

impl AdamW {
    pub fn step<T: Real>(&self, param: &mut Parameter<T>, lr: f64, decay: bool) -> Result<()> {
        let wd = if decay { self.weight_decay } else { 0.0 };
        adamw_step(param, lr, self.beta1, self.beta2, self.eps, wd)
    }
}
