use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Fixed sinusoidal table: `PE[p,2i] = sin(p/10000^(2i/d))`, `PE[p,2i+1] = cos(…)`.
pub fn sinusoidal_positional_embedding<T: Real>(num_positions: usize, dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::config(format!(
            "positional embedding dim must be even and positive, got {dim}"
        )));
    }
    if num_positions == 0 {
        return Err(Error::config("positional embedding needs at least one position"));
    }
    let mut data = Vec::with_capacity(num_positions * dim);
    for p in 0..num_positions {
        for i in 0..dim / 2 {
            let angle = p as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            data.push(T::of(angle.sin()));
            data.push(T::of(angle.cos()));
        }
    }
    Tensor::new(vec![num_positions, dim], data)
}
