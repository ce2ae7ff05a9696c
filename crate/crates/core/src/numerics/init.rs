use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Half-width of the Xavier/Glorot uniform distribution.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Samples a `[fan_in × fan_out]` matrix i.i.d. from `U[−b, b]`.
pub fn xavier_uniform_init<T: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    let &[fan_in, fan_out] = shape else {
        return Err(Error::config(format!("xavier init needs a 2-d shape, got {shape:?}")));
    };
    let b = xavier_bound(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-b, b);
    let data = (0..fan_in * fan_out).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn normal_init<T: Real, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Result<Tensor<T>> {
    let dist = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| T::of(dist.sample(rng))).collect())
}
