//! Whole-model gradient audit: the masked-MSE gradient from backprop against
//! central differences of the forward pass, both in `f64`.

use rand::Rng;

use crate::error::Result;
use crate::model::{random_mask, Autoencoder, ModelConfig};
use crate::numerics::gradcheck::{central_difference_step, GradCheckSummary, MODEL_FD_STEP};
use crate::numerics::{SeedStream, Tensor};

/// Checks every parameter when `fraction >= 1`, otherwise a seeded random
/// subset of roughly `fraction` of the scalars (at least one per tensor).
pub fn check_model_gradients(
    config: &ModelConfig,
    seed: u64,
    mask_ratio: f64,
    fraction: f64,
) -> Result<GradCheckSummary> {
    let seeds = SeedStream::new(seed);
    let mut model = Autoencoder::<f64>::new(config.clone(), &seeds)?;
    // Perturb the zero-initialized biases and unit layer-norm gains so every
    // parameter class carries a non-trivial gradient path.
    let mut rng = seeds.rng("gradcheck-perturb", 0);
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let mut rng = seeds.rng("gradcheck-clip", 0);
    let n = config.clip_len * config.input_dim;
    let clip = Tensor::new(
        vec![config.clip_len, config.input_dim],
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let plan = random_mask(config.clip_len, mask_ratio, &mut seeds.rng("gradcheck-mask", 0))?;

    let mut grads = model.zero_grads();
    model.loss_and_backward(&clip, &plan, 1.0, &mut grads)?;

    let loss_of =
        |m: &Autoencoder<f64>| -> f64 { m.loss_and_backward(&clip, &plan, 1.0, &mut m.zero_grads()).unwrap() };
    let mut pick = seeds.rng("gradcheck-pick", 0);
    let mut summary = GradCheckSummary::default();
    let count = model.params().len();
    for k in 0..count {
        let numel = model.params()[k].numel();
        let forced = pick.gen_range(0..numel);
        for i in 0..numel {
            if fraction < 1.0 && i != forced && !pick.gen_bool(fraction) {
                continue;
            }
            let id = model.params()[k].id;
            let mut x = model.params()[k].value.data()[i];
            let numeric = central_difference_step(&mut x, MODEL_FD_STEP, |v| {
                model.params_mut()[k].value.data_mut()[i] = v;
                loss_of(&model)
            });
            model.params_mut()[k].value.data_mut()[i] = x;
            summary.record(grads.get(id).data()[i], numeric);
        }
    }
    Ok(summary)
}
