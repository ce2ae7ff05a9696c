use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamW;
use crate::train::sampler::StridePolicy;

/// How the length of a run is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// `epochs` passes over the corpus.
    Epochs,
    /// Exactly `samples` clips in total.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub samples: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: f64,
    pub min_lr: f64,
    pub mask_ratio: f64,
    pub stride: StridePolicy,
    /// Clips drawn per video per epoch on long-video corpora.
    pub clips_per_video: usize,
    pub seed: u64,
    pub optimizer: AdamW,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Epochs,
            epochs: 200,
            samples: 10_000,
            batch_size: 128,
            base_lr: 4e-4,
            warmup_epochs: 40.0,
            min_lr: 1e-6,
            mask_ratio: 0.5,
            stride: StridePolicy::default(),
            clips_per_video: 10,
            seed: 0,
            optimizer: AdamW::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for continuing training on a summarization dataset: a sample
    /// budget and a five-epoch warmup.
    pub fn finetune() -> Self {
        TrainConfig {
            mode: TrainMode::Samples,
            warmup_epochs: 5.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::config(format!(
                "mask_ratio must lie in (0, 1), got {}",
                self.mask_ratio
            )));
        }
        if self.clips_per_video == 0 {
            return Err(Error::config("clips_per_video must be at least 1"));
        }
        match self.mode {
            TrainMode::Epochs if self.epochs == 0 => return Err(Error::config("epochs must be at least 1")),
            TrainMode::Samples if self.samples == 0 => return Err(Error::config("samples must be at least 1")),
            _ => {}
        }
        self.stride.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.batch_size, c.base_lr, c.warmup_epochs, c.min_lr),
            (128, 4e-4, 40.0, 1e-6)
        );
        assert_eq!((c.mask_ratio, c.epochs, c.clips_per_video), (0.5, 200, 10));
        assert_eq!(c.stride, StridePolicy::UniformRandom { lo: 1, hi: 8 });
        let f = TrainConfig::finetune();
        assert_eq!((f.mode, f.warmup_epochs, f.samples), (TrainMode::Samples, 5.0, 10_000));
    }

    #[test]
    fn toml_partial_and_unknown() {
        let c: TrainConfig = toml::from_str("mode = 'samples'\nsamples = 50000\nstride = 'rand(2,4)'").unwrap();
        assert_eq!(c.samples, 50_000);
        assert_eq!(c.stride, StridePolicy::UniformRandom { lo: 2, hi: 4 });
        assert!(toml::from_str::<TrainConfig>("batch = 3").is_err());
        assert!(toml::from_str::<TrainConfig>("stride = 'rand(0,1)'").is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for c in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                mask_ratio: 1.0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
