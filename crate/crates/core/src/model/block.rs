use rand::Rng;

use crate::error::Result;
use crate::numerics::attention::AttentionCache;
use crate::numerics::layers::{LayerNormCache, MlpCache};
use crate::numerics::{GradStore, LayerNorm, Mlp, MultiHeadAttention, ParamFactory, Parameter, Real, Tensor};

/// Pre-norm transformer block:
///
/// ```text
/// h   = x + attn(norm1(x))
/// out = h + mlp(norm2(h))
/// ```
#[derive(Debug, Clone)]
pub struct Block<T = f32> {
    pub norm1: LayerNorm<T>,
    pub attn: MultiHeadAttention<T>,
    pub norm2: LayerNorm<T>,
    pub mlp: Mlp<T>,
}

pub struct BlockCache<T> {
    norm1: LayerNormCache<T>,
    attn: AttentionCache<T>,
    norm2: LayerNormCache<T>,
    mlp: MlpCache<T>,
}

impl<T: Real> Block<T> {
    pub fn new<R: Rng + ?Sized>(
        factory: &mut ParamFactory,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Block {
            norm1: LayerNorm::new(factory, &format!("{name}.norm1"), dim),
            attn: MultiHeadAttention::new(factory, &format!("{name}.attn"), dim, heads, rng)?,
            norm2: LayerNorm::new(factory, &format!("{name}.norm2"), dim),
            mlp: Mlp::new(factory, &format!("{name}.mlp"), dim, dim * mlp_ratio, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        let (n1, norm1) = self.norm1.forward(x)?;
        let (a, attn) = self.attn.forward(&n1)?;
        let mut h = x.clone();
        h.add_assign(&a);
        let (n2, norm2) = self.norm2.forward(&h)?;
        let (m, mlp) = self.mlp.forward(&n2)?;
        h.add_assign(&m);
        Ok((
            h,
            BlockCache {
                norm1,
                attn,
                norm2,
                mlp,
            },
        ))
    }

    pub fn backward(&self, cache: &BlockCache<T>, grad_out: &Tensor<T>, grads: &mut GradStore<T>) -> Result<Tensor<T>> {
        let d_n2 = self.mlp.backward(&cache.mlp, grad_out, grads)?;
        let mut d_h = self.norm2.backward(&cache.norm2, &d_n2, grads);
        d_h.add_assign(grad_out);
        let d_n1 = self.attn.backward(&cache.attn, &d_h, grads)?;
        let mut d_x = self.norm1.backward(&cache.norm1, &d_n1, grads);
        d_x.add_assign(&d_h);
        Ok(d_x)
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v: Vec<&Parameter<T>> = self.norm1.params().into();
        v.extend(self.attn.params());
        v.extend(self.norm2.params());
        v.extend(self.mlp.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> = self.norm1.params_mut().into();
        v.extend(self.attn.params_mut());
        v.extend(self.norm2.params_mut());
        v.extend(self.mlp.params_mut());
        v
    }
}
