//! The asymmetric masked autoencoder.
//!
//! ```text
//! visible frames ─ input_proj ─ +PE ─ encoder blocks ─ norm ─ enc_to_dec ─┐
//!                                                                         ├─ restore order ─ +PE ─ decoder blocks ─ norm ─ output_proj
//! mask token (shared, one vector) at every masked position ───────────────┘
//! ```
//!
//! Positional embeddings are added at each frame's original position in the
//! clip, both before the encoder and again before the decoder.

use crate::error::{Error, Result};
use crate::model::block::{Block, BlockCache};
use crate::model::config::ModelConfig;
use crate::model::mask::MaskPlan;
use crate::numerics::init::normal_init;
use crate::numerics::layers::LayerNormCache;
use crate::numerics::{
    sinusoidal_positional_embedding, GradStore, LayerNorm, Linear, ParamFactory, Parameter, Real, SeedStream, Tensor,
};

pub const MASK_TOKEN_INIT_STD: f64 = 0.02;
const TARGET_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Autoencoder<T = f32> {
    config: ModelConfig,
    pub input_proj: Linear<T>,
    pub encoder: Vec<Block<T>>,
    pub encoder_norm: LayerNorm<T>,
    pub enc_to_dec: Linear<T>,
    pub mask_token: Parameter<T>,
    pub decoder: Vec<Block<T>>,
    pub decoder_norm: LayerNorm<T>,
    pub output_proj: Linear<T>,
    enc_pos: Tensor<T>,
    dec_pos: Tensor<T>,
}

/// Visible input rows, block caches, final-norm cache and encoder output.
type EncoderPass<T> = (Tensor<T>, Vec<BlockCache<T>>, LayerNormCache<T>, Tensor<T>);

/// Everything backward needs from one forward pass.
pub struct ForwardCache<T> {
    plan: MaskPlan,
    visible: Vec<usize>,
    visible_input: Tensor<T>,
    encoder: Vec<BlockCache<T>>,
    encoder_norm: LayerNormCache<T>,
    encoded: Tensor<T>,
    decoder: Vec<BlockCache<T>>,
    decoder_norm: LayerNormCache<T>,
    decoded: Tensor<T>,
}

impl<T: Real> Autoencoder<T> {
    /// Fresh model: Xavier-uniform linear weights, zero biases, unit/zero
    /// layer-norm affine, mask token from N(0, 0.02²). Draws come from the
    /// `"init"` stream of `seeds`.
    pub fn new(config: ModelConfig, seeds: &SeedStream) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds.rng("init", 0);
        let mut f = ParamFactory::new();
        let c = &config;
        let input_proj = Linear::new(&mut f, "input_proj", c.input_dim, c.enc_dim, &mut rng)?;
        let encoder = (0..c.enc_depth)
            .map(|i| {
                Block::new(
                    &mut f,
                    &format!("encoder.{i}"),
                    c.enc_dim,
                    c.enc_heads,
                    c.mlp_ratio,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let encoder_norm = LayerNorm::new(&mut f, "encoder_norm", c.enc_dim);
        let enc_to_dec = Linear::new(&mut f, "enc_to_dec", c.enc_dim, c.dec_dim, &mut rng)?;
        let mask_token = f.make("mask_token", normal_init(&[c.dec_dim], MASK_TOKEN_INIT_STD, &mut rng)?);
        let decoder = (0..c.dec_depth)
            .map(|i| {
                Block::new(
                    &mut f,
                    &format!("decoder.{i}"),
                    c.dec_dim,
                    c.dec_heads,
                    c.mlp_ratio,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder_norm = LayerNorm::new(&mut f, "decoder_norm", c.dec_dim);
        let output_proj = Linear::new(&mut f, "output_proj", c.dec_dim, c.input_dim, &mut rng)?;
        Ok(Autoencoder {
            enc_pos: sinusoidal_positional_embedding(c.clip_len, c.enc_dim)?,
            dec_pos: sinusoidal_positional_embedding(c.clip_len, c.dec_dim)?,
            config,
            input_proj,
            encoder,
            encoder_norm,
            enc_to_dec,
            mask_token,
            decoder,
            decoder_norm,
            output_proj,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All parameters in id order.
    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v: Vec<&Parameter<T>> = self.input_proj.params().into();
        self.encoder.iter().for_each(|b| v.extend(b.params()));
        v.extend(self.encoder_norm.params());
        v.extend(self.enc_to_dec.params());
        v.push(&self.mask_token);
        self.decoder.iter().for_each(|b| v.extend(b.params()));
        v.extend(self.decoder_norm.params());
        v.extend(self.output_proj.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> = self.input_proj.params_mut().into();
        self.encoder.iter_mut().for_each(|b| v.extend(b.params_mut()));
        v.extend(self.encoder_norm.params_mut());
        v.extend(self.enc_to_dec.params_mut());
        v.push(&mut self.mask_token);
        self.decoder.iter_mut().for_each(|b| v.extend(b.params_mut()));
        v.extend(self.decoder_norm.params_mut());
        v.extend(self.output_proj.params_mut());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grads(&self) -> GradStore<T> {
        GradStore::zeros_like(self.params())
    }

    fn check_inputs(&self, clip: &Tensor<T>, plan: &MaskPlan) -> Result<()> {
        let c = &self.config;
        if clip.shape() != [c.clip_len, c.input_dim] {
            return Err(Error::usage(format!(
                "clip shape {:?} does not match model [{}, {}]",
                clip.shape(),
                c.clip_len,
                c.input_dim
            )));
        }
        if plan.clip_len() != c.clip_len {
            return Err(Error::usage(format!(
                "mask plan is for clips of {} frames, model expects {}",
                plan.clip_len(),
                c.clip_len
            )));
        }
        Ok(())
    }

    fn encode_cached(&self, clip: &Tensor<T>, visible: &[usize]) -> Result<EncoderPass<T>> {
        let visible_input = clip.gather_rows(visible);
        let mut x = self.input_proj.forward(&visible_input)?;
        x.add_assign(&self.enc_pos.gather_rows(visible));
        let mut caches = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (y, cache) = block.forward(&x)?;
            caches.push(cache);
            x = y;
        }
        let (encoded, norm_cache) = self.encoder_norm.forward(&x)?;
        Ok((encoded, caches, norm_cache, visible_input))
    }

    /// Encoder output for the visible frames of `clip`, in position order.
    /// Masked rows of `clip` are never read.
    pub fn encode(&self, clip: &Tensor<T>, plan: &MaskPlan) -> Result<Tensor<T>> {
        self.check_inputs(clip, plan)?;
        Ok(self.encode_cached(clip, &plan.visible())?.0)
    }

    /// Full-length reconstruction `[clip_len × input_dim]`.
    pub fn forward(&self, clip: &Tensor<T>, plan: &MaskPlan) -> Result<Tensor<T>> {
        self.forward_cached(clip, plan).map(|(y, _)| y)
    }

    pub fn forward_cached(&self, clip: &Tensor<T>, plan: &MaskPlan) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_inputs(clip, plan)?;
        let c = &self.config;
        let visible = plan.visible();
        let (encoded, enc_caches, enc_norm_cache, visible_input) = self.encode_cached(clip, &visible)?;
        let projected = self.enc_to_dec.forward(&encoded)?;

        let mut z = Tensor::zeros(&[c.clip_len, c.dec_dim]);
        for (row, &pos) in visible.iter().enumerate() {
            z.row_mut(pos).copy_from_slice(projected.row(row));
        }
        for &pos in plan.masked() {
            z.row_mut(pos).copy_from_slice(self.mask_token.value.data());
        }
        z.add_assign(&self.dec_pos);

        let mut dec_caches = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            let (y, cache) = block.forward(&z)?;
            dec_caches.push(cache);
            z = y;
        }
        let (decoded, dec_norm_cache) = self.decoder_norm.forward(&z)?;
        let out = self.output_proj.forward(&decoded)?;
        Ok((
            out,
            ForwardCache {
                plan: plan.clone(),
                visible,
                visible_input,
                encoder: enc_caches,
                encoder_norm: enc_norm_cache,
                encoded,
                decoder: dec_caches,
                decoder_norm: dec_norm_cache,
                decoded,
            },
        ))
    }

    /// Accumulates parameter gradients for `grad_out = ∂loss/∂reconstruction`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>, grads: &mut GradStore<T>) -> Result<()> {
        let d_decoded = self.output_proj.backward(&cache.decoded, grad_out, grads)?;
        let mut d_z = self.decoder_norm.backward(&cache.decoder_norm, &d_decoded, grads);
        for (block, bc) in self.decoder.iter().zip(&cache.decoder).rev() {
            d_z = block.backward(bc, &d_z, grads)?;
        }
        let mut d_token = vec![T::zero(); self.config.dec_dim];
        for &pos in cache.plan.masked() {
            for (a, &g) in d_token.iter_mut().zip(d_z.row(pos)) {
                *a += g;
            }
        }
        grads.accumulate_slice(self.mask_token.id, &d_token);

        let d_projected = d_z.gather_rows(&cache.visible);
        let d_encoded = self.enc_to_dec.backward(&cache.encoded, &d_projected, grads)?;
        let mut d_x = self.encoder_norm.backward(&cache.encoder_norm, &d_encoded, grads);
        for (block, bc) in self.encoder.iter().zip(&cache.encoder).rev() {
            d_x = block.backward(bc, &d_x, grads)?;
        }
        self.input_proj.backward(&cache.visible_input, &d_x, grads)?;
        Ok(())
    }

    /// Reconstruction target for `clip`: the raw features, or per-frame
    /// standardized features when `normalize_target` is set.
    pub fn target(&self, clip: &Tensor<T>) -> Tensor<T> {
        if !self.config.normalize_target {
            return clip.clone();
        }
        standardize_rows(clip)
    }

    /// Forward, masked-MSE and backward in one call. Gradients are scaled by
    /// `grad_scale` (e.g. `1/batch`) before accumulation. Returns the loss.
    pub fn loss_and_backward(
        &self,
        clip: &Tensor<T>,
        plan: &MaskPlan,
        grad_scale: T,
        grads: &mut GradStore<T>,
    ) -> Result<T> {
        let (recon, cache) = self.forward_cached(clip, plan)?;
        let target = self.target(clip);
        let loss = masked_mse_loss(&recon, &target, plan)?;
        let mut d_recon = masked_mse_grad(&recon, &target, plan)?;
        d_recon.scale(grad_scale);
        self.backward(&cache, &d_recon, grads)?;
        Ok(loss)
    }

    /// Copies `grads` into each parameter's gradient slot.
    pub fn set_grads(&mut self, grads: &GradStore<T>) {
        for p in self.params_mut() {
            p.grad.data_mut().copy_from_slice(grads.get(p.id).data());
        }
    }

    /// Replaces the parameter values (and resets optimizer state). Used by
    /// the checkpoint loader.
    pub(crate) fn load_values(&mut self, values: Vec<Tensor<T>>) {
        for (p, v) in self.params_mut().into_iter().zip(values) {
            *p = Parameter::new(std::mem::take(&mut p.name), p.id, v);
        }
    }
}

fn standardize_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let n = T::of_usize(x.cols());
    let eps = T::of(TARGET_NORM_EPS);
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    out
}

/// Mean squared error over the masked rows and all feature dimensions.
pub fn masked_mse_loss<T: Real>(recon: &Tensor<T>, target: &Tensor<T>, plan: &MaskPlan) -> Result<T> {
    check_loss_shapes(recon, target, plan)?;
    let mut sum = T::zero();
    for &pos in plan.masked() {
        for (&r, &t) in recon.row(pos).iter().zip(target.row(pos)) {
            sum += (r - t) * (r - t);
        }
    }
    Ok(sum / T::of_usize(plan.masked().len() * recon.cols()))
}

/// `∂ masked_mse / ∂ recon`: zero on unmasked rows.
pub fn masked_mse_grad<T: Real>(recon: &Tensor<T>, target: &Tensor<T>, plan: &MaskPlan) -> Result<Tensor<T>> {
    check_loss_shapes(recon, target, plan)?;
    let scale = T::of(2.0) / T::of_usize(plan.masked().len() * recon.cols());
    let mut g = Tensor::zeros(recon.shape());
    for &pos in plan.masked() {
        for ((o, &r), &t) in g.row_mut(pos).iter_mut().zip(recon.row(pos)).zip(target.row(pos)) {
            *o = scale * (r - t);
        }
    }
    Ok(g)
}

fn check_loss_shapes<T: Real>(recon: &Tensor<T>, target: &Tensor<T>, plan: &MaskPlan) -> Result<()> {
    if recon.shape() != target.shape() {
        return Err(Error::usage(format!(
            "reconstruction {:?} and target {:?} differ in shape",
            recon.shape(),
            target.shape()
        )));
    }
    if plan.masked().is_empty() {
        return Err(Error::usage("loss needs at least one masked frame"));
    }
    if plan.clip_len() != recon.rows() {
        return Err(Error::usage("mask plan length differs from reconstruction length"));
    }
    Ok(())
}
