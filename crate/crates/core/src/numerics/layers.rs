//! Differentiable building blocks. Each forward returns whatever the
//! matching backward needs; backward functions return input gradients and
//! push parameter gradients into a [`GradStore`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::init::xavier_uniform_init;
use crate::numerics::{GradStore, Parameter, Real, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Hands out parameter ids in creation order.
#[derive(Debug, Default)]
pub struct ParamFactory {
    next_id: usize,
}

impl ParamFactory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn make<T: Real>(&mut self, name: impl Into<String>, value: Tensor<T>) -> Parameter<T> {
        let p = Parameter::new(name, self.next_id, value);
        self.next_id += 1;
        p
    }

    pub fn count(&self) -> usize {
        self.next_id
    }
}

// ---------------------------------------------------------------------------
// linear

/// `out[i,j] = Σ_k x[i,k]·w[k,j] + b[j]`.
pub fn linear<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let out_dim = weight.cols();
    if bias.len() != out_dim {
        return Err(Error::config(format!(
            "bias has {} entries, weight produces {out_dim} outputs",
            bias.len()
        )));
    }
    let mut out = x.matmul(weight)?;
    for i in 0..out.rows() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>> {
    let input = grad_out.matmul_nt(weight)?;
    let w = x.matmul_tn(grad_out)?;
    let mut b = Tensor::zeros(&[grad_out.cols()]);
    for i in 0..grad_out.rows() {
        for (acc, &g) in b.data_mut().iter_mut().zip(grad_out.row(i)) {
            *acc += g;
        }
    }
    Ok(LinearGrads {
        input,
        weight: w,
        bias: b,
    })
}

#[derive(Debug, Clone)]
pub struct Linear<T = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Real> Linear<T> {
    /// Xavier-uniform weight, zero bias.
    pub fn new<R: Rng + ?Sized>(
        factory: &mut ParamFactory,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Linear {
            weight: factory.make(format!("{name}.weight"), xavier_uniform_init(&[in_dim, out_dim], rng)?),
            bias: factory.make(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        linear(x, &self.weight.value, &self.bias.value)
    }

    /// Returns the input gradient; `x` is the forward input.
    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>, grads: &mut GradStore<T>) -> Result<Tensor<T>> {
        let g = linear_backward(x, &self.weight.value, grad_out)?;
        grads.accumulate(self.weight.id, &g.weight);
        grads.accumulate(self.bias.id, &g.bias);
        Ok(g.input)
    }

    pub fn params(&self) -> [&Parameter<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// layer norm

pub struct LayerNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

/// Per-row standardization with population variance, then `gain ⊙ x̂ + shift`.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    shift: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let d = x.cols();
    if gain.len() != d || shift.len() != d {
        return Err(Error::config(format!(
            "layer norm affine has {}/{} entries for rows of width {d}",
            gain.len(),
            shift.len()
        )));
    }
    let dn = T::of_usize(d);
    let eps = T::of(eps);
    let mut normalized = x.clone();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for (n, &v) in normalized.row_mut(i).iter_mut().zip(row) {
            *n = (v - mean) * is;
        }
        let nrow = normalized.row(i).to_vec();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = nrow[j] * gain.data()[j] + shift.data()[j];
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

pub struct LayerNormGrads<T> {
    pub input: Tensor<T>,
    pub gain: Tensor<T>,
    pub shift: Tensor<T>,
}

pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gain: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> LayerNormGrads<T> {
    let d = grad_out.cols();
    let dn = T::of_usize(d);
    let mut input = Tensor::zeros(grad_out.shape());
    let mut dgain = Tensor::zeros(&[d]);
    let mut dshift = Tensor::zeros(&[d]);
    let mut dxhat = vec![T::zero(); d];
    for i in 0..grad_out.rows() {
        let gy = grad_out.row(i);
        let xh = cache.normalized.row(i);
        for j in 0..d {
            dxhat[j] = gy[j] * gain.data()[j];
            dgain.data_mut()[j] += gy[j] * xh[j];
            dshift.data_mut()[j] += gy[j];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() / dn;
        let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / dn;
        let is = cache.inv_std[i];
        for (j, o) in input.row_mut(i).iter_mut().enumerate() {
            *o = is * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    LayerNormGrads {
        input,
        gain: dgain,
        shift: dshift,
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm<T = f32> {
    pub gain: Parameter<T>,
    pub shift: Parameter<T>,
    pub eps: f64,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(factory: &mut ParamFactory, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: factory.make(format!("{name}.gain"), Tensor::filled(&[dim], T::one())),
            shift: factory.make(format!("{name}.shift"), Tensor::zeros(&[dim])),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LayerNormCache<T>)> {
        layer_norm(x, &self.gain.value, &self.shift.value, self.eps)
    }

    pub fn backward(&self, cache: &LayerNormCache<T>, grad_out: &Tensor<T>, grads: &mut GradStore<T>) -> Tensor<T> {
        let g = layer_norm_backward(cache, &self.gain.value, grad_out);
        grads.accumulate(self.gain.id, &g.gain);
        grads.accumulate(self.shift.id, &g.shift);
        g.input
    }

    pub fn params(&self) -> [&Parameter<T>; 2] {
        [&self.gain, &self.shift]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.gain, &mut self.shift]
    }
}

// ---------------------------------------------------------------------------
// gelu, softmax

/// Exact GELU: `x·Φ(x) = ½x(1 + erf(x/√2))`.
pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let half = T::of(0.5);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    x.map(|v| half * v * (T::one() + (v * inv_sqrt2).erf()))
}

pub fn gelu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let half = T::of(0.5);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = T::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let mut out = grad_out.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        let cdf = half * (T::one() + (v * inv_sqrt2).erf());
        let pdf = (-(v * v) * half).exp() * inv_sqrt_2pi;
        *g *= cdf + v * pdf;
    }
    out
}

/// Numerically stable softmax of every row, in place.
pub fn softmax_rows<T: Real>(x: &mut Tensor<T>) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

// ---------------------------------------------------------------------------
// mlp

pub struct MlpCache<T> {
    input: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
}

/// `fc2(gelu(fc1(x)))`.
#[derive(Debug, Clone)]
pub struct Mlp<T = f32> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Real> Mlp<T> {
    pub fn new<R: Rng + ?Sized>(
        factory: &mut ParamFactory,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::new(factory, &format!("{name}.fc1"), dim, hidden, rng)?,
            fc2: Linear::new(factory, &format!("{name}.fc2"), hidden, dim, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, MlpCache<T>)> {
        let hidden_pre = self.fc1.forward(x)?;
        let hidden = gelu(&hidden_pre);
        let out = self.fc2.forward(&hidden)?;
        Ok((
            out,
            MlpCache {
                input: x.clone(),
                hidden_pre,
                hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &MlpCache<T>, grad_out: &Tensor<T>, grads: &mut GradStore<T>) -> Result<Tensor<T>> {
        let d_hidden = self.fc2.backward(&cache.hidden, grad_out, grads)?;
        let d_pre = gelu_backward(&cache.hidden_pre, &d_hidden);
        self.fc1.backward(&cache.input, &d_pre, grads)
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.fc1.params().into_iter().chain(self.fc2.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.fc1.params_mut().into_iter().chain(self.fc2.params_mut())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn linear_forced_arithmetic() {
        let y = linear(
            &m(&[&[1.0, 2.0]]),
            &m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            &Tensor::new(vec![2], vec![3.0, 4.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(y.data(), &[4.0, 6.0]);
    }

    #[test]
    fn linear_identity() {
        let x = m(&[&[0.3, -1.2, 5.0], &[2.0, 0.0, -0.5]]);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(linear(&x, &eye, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn linear_bias_mismatch() {
        let r = linear(
            &Tensor::<f32>::zeros(&[1, 2]),
            &Tensor::zeros(&[2, 3]),
            &Tensor::zeros(&[2]),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = m(&[&[3.0, 3.0, 3.0, 3.0]]);
        let (y, _) = layer_norm(&x, &Tensor::filled(&[4], 1.0), &Tensor::zeros(&[4]), LAYER_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_standardizes() {
        let x = m(&[&[1.0, 2.0, 3.0, 6.0]]);
        let (y, _) = layer_norm(&x, &Tensor::filled(&[4], 1.0), &Tensor::zeros(&[4]), 0.0).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_values() {
        let y = gelu(&Tensor::new(vec![3], vec![0.0f64, 1.0, -1.0]).unwrap());
        assert_eq!(y.data()[0], 0.0);
        // Φ(1) = 0.841344746...
        assert!((y.data()[1] - 0.841_344_746_068_543).abs() < 1e-12);
        assert!((y.data()[2] + 0.158_655_253_931_457).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut x = m(&[&[1.0, 2.0, 3.0], &[1000.0, 1000.0, -1000.0]]);
        softmax_rows(&mut x);
        for i in 0..2 {
            let s: f64 = x.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(x.row(i).iter().all(|&p| p >= 0.0));
        }
    }
}
