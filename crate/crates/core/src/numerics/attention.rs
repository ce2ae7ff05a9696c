//! Multi-head scaled dot-product self-attention with a fused QKV projection.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::layers::{softmax_rows, Linear, ParamFactory};
use crate::numerics::tensor::dot;
use crate::numerics::{GradStore, Parameter, Real, Tensor};

#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T = f32> {
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub heads: usize,
}

pub struct AttentionCache<T> {
    input: Tensor<T>,
    qkv: Tensor<T>,
    /// One `[n×n]` row-stochastic matrix per head.
    weights: Vec<Tensor<T>>,
    context: Tensor<T>,
}

impl<T> AttentionCache<T> {
    pub fn weights(&self) -> &[Tensor<T>] {
        &self.weights
    }
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn new<R: Rng + ?Sized>(
        factory: &mut ParamFactory,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(MultiHeadAttention {
            qkv: Linear::new(factory, &format!("{name}.qkv"), dim, 3 * dim, rng)?,
            proj: Linear::new(factory, &format!("{name}.proj"), dim, dim, rng)?,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.proj.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AttentionCache<T>)> {
        let d = self.dim();
        if x.cols() != d {
            return Err(Error::config(format!("attention expects width {d}, got {}", x.cols())));
        }
        check_heads(d, self.heads)?;
        let n = x.rows();
        let dh = d / self.heads;
        let scale = T::one() / T::of_usize(dh).sqrt();
        let qkv = self.qkv.forward(x)?;

        let mut context = Tensor::zeros(&[n, d]);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            let mut scores = Tensor::zeros(&[n, n]);
            for i in 0..n {
                let q = &qkv.row(i)[qo..qo + dh];
                for j in 0..n {
                    let k = &qkv.row(j)[ko..ko + dh];
                    scores.data_mut()[i * n + j] = dot(q, k) * scale;
                }
            }
            softmax_rows(&mut scores);
            for i in 0..n {
                let p = scores.row(i).to_vec();
                let out = &mut context.row_mut(i)[qo..qo + dh];
                for (j, &pij) in p.iter().enumerate() {
                    let v = &qkv.row(j)[vo..vo + dh];
                    for (o, &vv) in out.iter_mut().zip(v) {
                        *o += pij * vv;
                    }
                }
            }
            weights.push(scores);
        }
        let out = self.proj.forward(&context)?;
        Ok((
            out,
            AttentionCache {
                input: x.clone(),
                qkv,
                weights,
                context,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &AttentionCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut GradStore<T>,
    ) -> Result<Tensor<T>> {
        let d = self.dim();
        let n = cache.input.rows();
        let dh = d / self.heads;
        let scale = T::one() / T::of_usize(dh).sqrt();
        let d_context = self.proj.backward(&cache.context, grad_out, grads)?;
        let qkv = &cache.qkv;
        let mut d_qkv = Tensor::zeros(&[n, 3 * d]);

        for (h, p) in cache.weights.iter().enumerate() {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            // dP[i,j] = dO_i · v_j ; dV_j += Σ_i P[i,j] dO_i
            let mut d_scores = Tensor::zeros(&[n, n]);
            for i in 0..n {
                let d_o = &d_context.row(i)[qo..qo + dh];
                for j in 0..n {
                    let v = &qkv.row(j)[vo..vo + dh];
                    d_scores.data_mut()[i * n + j] = dot(d_o, v);
                }
            }
            for j in 0..n {
                for i in 0..n {
                    let pij = p.data()[i * n + j];
                    let d_o = &d_context.row(i)[qo..qo + dh];
                    let dv = &mut d_qkv.row_mut(j)[vo..vo + dh];
                    for (a, &b) in dv.iter_mut().zip(d_o) {
                        *a += pij * b;
                    }
                }
            }
            // softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P))
            for i in 0..n {
                let prow = p.row(i);
                let drow = d_scores.row_mut(i);
                let s = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (dv, &pv) in drow.iter_mut().zip(prow) {
                    *dv = pv * (*dv - s) * scale;
                }
            }
            // dq_i = Σ_j dS[i,j] k_j ; dk_j = Σ_i dS[i,j] q_i
            for i in 0..n {
                for j in 0..n {
                    let ds = d_scores.data()[i * n + j];
                    if ds == T::zero() {
                        continue;
                    }
                    let k = &qkv.row(j)[ko..ko + dh];
                    let q = &qkv.row(i)[qo..qo + dh];
                    let dq = &mut d_qkv.row_mut(i)[qo..qo + dh];
                    for (a, &b) in dq.iter_mut().zip(k) {
                        *a += ds * b;
                    }
                    let dk = &mut d_qkv.row_mut(j)[ko..ko + dh];
                    for (a, &b) in dk.iter_mut().zip(q) {
                        *a += ds * b;
                    }
                }
            }
        }
        self.qkv.backward(&cache.input, &d_qkv, grads)
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.qkv.params().into_iter().chain(self.proj.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.qkv.params_mut().into_iter().chain(self.proj.params_mut())
    }
}

fn check_heads(dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || !dim.is_multiple_of(heads) {
        return Err(Error::config(format!(
            "attention width {dim} is not divisible by {heads} heads"
        )));
    }
    Ok(())
}

/// Functional form: self-attention of `x` under the given module parameters.
pub fn multi_head_attention<T: Real>(x: &Tensor<T>, attn: &MultiHeadAttention<T>) -> Result<Tensor<T>> {
    attn.forward(x).map(|(y, _)| y)
}
