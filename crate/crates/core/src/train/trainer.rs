//! The masked-reconstruction training loop.
//!
//! Sample `g` of a run (counting from zero over the whole run) belongs to
//! epoch `g / clips_per_epoch`. Each epoch visits a fresh permutation of the
//! corpus slots, so every video is drawn equally often per epoch. The clip
//! and mask of sample `g` come from generators keyed by `g` alone, and
//! per-chunk gradients are summed in chunk order, so neither the thread
//! count nor the batch layout of earlier iterations changes any draw or any
//! bit of the result.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::datastore::{DatasetManifest, FeatureSequence};
use crate::error::{Error, Result};
use crate::model::{random_mask, Autoencoder};
use crate::numerics::{GradStore, LrSchedule, SeedStream};
use crate::train::config::{TrainConfig, TrainMode};
use crate::train::sampler::{materialize, sample_clip, ClipSpec};

/// Samples per gradient chunk. Fixed so the summation tree never depends on
/// the machine.
const CHUNK_SAMPLES: usize = 16;

/// Feature sequences used for training.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub videos: Vec<FeatureSequence>,
    /// Long videos contribute `clips_per_video` clips per epoch instead of one.
    pub long_videos: bool,
}

impl Corpus {
    pub fn new(videos: Vec<FeatureSequence>, long_videos: bool) -> Result<Self> {
        let first = videos.first().ok_or_else(|| Error::usage("training corpus is empty"))?;
        let dim = first.feature_dim();
        if let Some(v) = videos.iter().find(|v| v.feature_dim() != dim) {
            return Err(Error::usage(format!(
                "video '{}' has {}-d features, corpus is {dim}-d",
                v.video_id,
                v.feature_dim()
            )));
        }
        Ok(Corpus { videos, long_videos })
    }

    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        Self::new(manifest.load_features()?, manifest.long_videos)
    }

    pub fn feature_dim(&self) -> usize {
        self.videos[0].feature_dim()
    }

    pub fn clips_per_epoch(&self, cfg: &TrainConfig) -> usize {
        let per_video = if self.long_videos { cfg.clips_per_video } else { 1 };
        self.videos.len() * per_video
    }
}

/// Sample and iteration accounting for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunPlan {
    pub clips_per_epoch: usize,
    pub total_samples: usize,
    pub iterations: usize,
    pub schedule: LrSchedule,
}

impl RunPlan {
    pub fn new(clips_per_epoch: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if clips_per_epoch == 0 {
            return Err(Error::usage("training corpus is empty"));
        }
        let total_samples = match cfg.mode {
            TrainMode::Epochs => cfg.epochs * clips_per_epoch,
            TrainMode::Samples => cfg.samples,
        };
        let schedule = LrSchedule::new(
            cfg.base_lr,
            cfg.batch_size,
            cfg.warmup_epochs,
            total_samples as f64 / clips_per_epoch as f64,
            cfg.min_lr,
        )?;
        Ok(RunPlan {
            clips_per_epoch,
            total_samples,
            iterations: total_samples.div_ceil(cfg.batch_size),
            schedule,
        })
    }

    /// Fractional epoch reached after `samples` clips.
    pub fn epoch_after(&self, samples: usize) -> f64 {
        samples as f64 / self.clips_per_epoch as f64
    }

    /// Sample range of iteration `k`; the last batch may be short.
    pub fn batch_range(&self, k: usize, batch_size: usize) -> std::ops::Range<usize> {
        let start = k * batch_size;
        start..(start + batch_size).min(self.total_samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub epoch: f64,
    pub lr: f64,
    pub loss: f64,
}

/// Writes the trace as CSV with header `iteration,epoch,lr,loss`.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(w: W) -> Self {
        TraceWriter {
            inner: csv::Writer::from_writer(w),
        }
    }

    pub fn write(&mut self, row: &TraceRow) -> Result<()> {
        self.inner
            .serialize(row)
            .and_then(|_| self.inner.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Training(format!("writing loss trace: {e}")))
    }
}

struct ChunkResult {
    grads: GradStore<f32>,
    losses: Vec<(f64, ClipSpec)>,
}

/// Runs a full training schedule on `model`, calling `on_step` after every
/// optimizer step. Returns the per-iteration trace.
pub fn train(
    model: &mut Autoencoder<f32>,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TraceRow) -> Result<()>,
) -> Result<Vec<TraceRow>> {
    let mc = model.config().clone();
    if corpus.feature_dim() != mc.input_dim {
        return Err(Error::usage(format!(
            "corpus features are {}-d, model expects {}-d",
            corpus.feature_dim(),
            mc.input_dim
        )));
    }
    let plan = RunPlan::new(corpus.clips_per_epoch(cfg), cfg)?;
    let seeds = SeedStream::new(cfg.seed);
    let wave = rayon::current_num_threads().max(1);
    let mut order = EpochOrder::new(plan.clips_per_epoch, corpus.videos.len(), seeds);
    let mut trace = Vec::with_capacity(plan.iterations);

    for k in 0..plan.iterations {
        let range = plan.batch_range(k, cfg.batch_size);
        let batch = range.len();
        let epoch = plan.epoch_after(range.start);
        let lr = plan.schedule.lr_at(epoch)?;
        let assignments: Vec<(usize, usize)> = range.clone().map(|g| (g, order.video_of(g))).collect();
        let scale = 1.0 / batch as f32;

        let model_ref = &*model;
        let mut total = model_ref.zero_grads();
        let mut losses = Vec::with_capacity(batch);
        for wave_items in assignments.chunks(CHUNK_SAMPLES * wave) {
            let results: Vec<Result<ChunkResult>> = wave_items
                .par_chunks(CHUNK_SAMPLES)
                .map(|chunk| {
                    let mut grads = model_ref.zero_grads();
                    let mut losses = Vec::with_capacity(chunk.len());
                    for &(g, vi) in chunk {
                        let video = &corpus.videos[vi];
                        let spec = sample_clip(video, cfg.stride, mc.clip_len, &mut seeds.rng("clip", g as u64))?;
                        let clip = materialize(&spec, video)?;
                        let mask = random_mask(mc.clip_len, cfg.mask_ratio, &mut seeds.rng("mask", g as u64))?;
                        let loss = model_ref.loss_and_backward(&clip, &mask, scale, &mut grads)?;
                        losses.push((loss as f64, spec));
                    }
                    Ok(ChunkResult { grads, losses })
                })
                .collect();
            for r in results {
                let r = r?;
                total.merge(&r.grads);
                losses.extend(r.losses);
            }
        }

        let bad: Vec<String> = losses
            .iter()
            .filter(|(l, _)| !l.is_finite())
            .map(|(_, s)| s.to_string())
            .collect();
        if !bad.is_empty() {
            return Err(Error::Training(format!(
                "non-finite loss at iteration {k}; offending clips: {}",
                bad.join(", ")
            )));
        }
        let loss = losses.iter().map(|(l, _)| l).sum::<f64>() / batch as f64;

        model.set_grads(&total);
        for p in model.params_mut() {
            // Decay matrices only; biases, norms and the mask token are exempt.
            let decay = p.shape().len() == 2;
            cfg.optimizer.step(p, lr, decay)?;
        }
        let row = TraceRow {
            iteration: k,
            epoch,
            lr,
            loss,
        };
        on_step(&row)?;
        trace.push(row);
    }
    Ok(trace)
}

/// Lazily generated per-epoch permutations of the corpus slots.
struct EpochOrder {
    clips_per_epoch: usize,
    num_videos: usize,
    seeds: SeedStream,
    epoch: Option<usize>,
    perm: Vec<usize>,
}

impl EpochOrder {
    fn new(clips_per_epoch: usize, num_videos: usize, seeds: SeedStream) -> Self {
        EpochOrder {
            clips_per_epoch,
            num_videos,
            seeds,
            epoch: None,
            perm: Vec::new(),
        }
    }

    fn video_of(&mut self, sample: usize) -> usize {
        let e = sample / self.clips_per_epoch;
        if self.epoch != Some(e) {
            self.perm = (0..self.clips_per_epoch).collect();
            self.perm.shuffle(&mut self.seeds.rng("order", e as u64));
            self.epoch = Some(e);
        }
        self.perm[sample % self.clips_per_epoch] % self.num_videos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::Tensor;
    use crate::train::sampler::StridePolicy;

    fn corpus(videos: usize, frames: usize) -> Corpus {
        let vids = (0..videos)
            .map(|v| {
                let data = (0..frames * 8)
                    .map(|i| (((i / 8 + v) / 5 % 3) as f32 - 1.0) * if i % 2 == 0 { 1.0 } else { -0.5 })
                    .collect();
                FeatureSequence::new(format!("v{v}"), 30.0, Tensor::new(vec![frames, 8], data).unwrap()).unwrap()
            })
            .collect();
        Corpus::new(vids, false).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            mode: TrainMode::Samples,
            samples: 200,
            batch_size: 32,
            warmup_epochs: 1.0,
            base_lr: 4e-3,
            stride: StridePolicy::UniformRandom { lo: 1, hi: 3 },
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn iteration_count_rounds_up() {
        let cfg = TrainConfig::finetune();
        let plan = RunPlan::new(500, &cfg).unwrap();
        assert_eq!(plan.iterations, 79);
        assert_eq!(plan.batch_range(78, 128).len(), 10_000 - 78 * 128);
        let epochs = RunPlan::new(50, &TrainConfig::default()).unwrap();
        assert_eq!(epochs.total_samples, 10_000);
        assert_eq!(epochs.schedule.total_epochs, 200.0);
    }

    #[test]
    fn clips_per_epoch_rule() {
        let mut c = corpus(5, 20);
        let cfg = TrainConfig::default();
        assert_eq!(c.clips_per_epoch(&cfg), 5);
        c.long_videos = true;
        assert_eq!(c.clips_per_epoch(&cfg), 50);
    }

    #[test]
    fn each_epoch_visits_every_video_equally() {
        let mut order = EpochOrder::new(30, 10, SeedStream::new(3));
        for e in 0..3 {
            let mut counts = [0; 10];
            for g in e * 30..(e + 1) * 30 {
                counts[order.video_of(g)] += 1;
            }
            assert!(counts.iter().all(|&c| c == 3), "{counts:?}");
        }
    }

    #[test]
    fn lr_follows_schedule_and_loss_is_finite() {
        let c = corpus(4, 40);
        let cfg = small_cfg();
        let mut model = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(0)).unwrap();
        let trace = train(&mut model, &c, &cfg, |_| Ok(())).unwrap();
        let plan = RunPlan::new(4, &cfg).unwrap();
        assert_eq!(trace.len(), 7);
        for r in &trace {
            assert!(r.loss.is_finite());
            assert_eq!(r.lr, plan.schedule.lr_at(r.iteration as f64 * 32.0 / 4.0).unwrap());
        }
        assert_eq!(trace[0].lr, 0.0);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let c = corpus(3, 30);
        let cfg = small_cfg();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut m = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(0)).unwrap();
                let t = train(&mut m, &c, &cfg, |_| Ok(())).unwrap();
                let bits: Vec<u32> = m
                    .params()
                    .iter()
                    .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
                    .collect();
                (t.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>(), bits)
            })
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a, run(1));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = corpus(2, 20);
        let mut cfgm = ModelConfig::tiny();
        cfgm.input_dim = 6;
        let mut m = Autoencoder::new(cfgm, &SeedStream::new(0)).unwrap();
        assert!(matches!(
            train(&mut m, &c, &small_cfg(), |_| Ok(())),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn non_finite_loss_names_iteration_and_clips() {
        let c = corpus(2, 20);
        let mut m = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(0)).unwrap();
        m.output_proj.bias.value.data_mut()[0] = f32::INFINITY;
        let e = train(&mut m, &c, &small_cfg(), |_| Ok(())).unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Training(_)));
        assert!(msg.contains("iteration 0") && msg.contains("stride"), "{msg}");
    }

    #[test]
    fn trace_csv_layout() {
        let mut buf = Vec::new();
        {
            let mut w = TraceWriter::new(&mut buf);
            w.write(&TraceRow {
                iteration: 0,
                epoch: 0.0,
                lr: 0.0,
                loss: 1.5,
            })
            .unwrap();
            w.write(&TraceRow {
                iteration: 1,
                epoch: 0.25,
                lr: 1e-4,
                loss: 1.25,
            })
            .unwrap();
        }
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,epoch,lr,loss\n0,0.0,0.0,1.5\n1,0.25,0.0001,1.25\n"
        );
    }
}
