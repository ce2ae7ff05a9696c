use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup from zero to the scaled peak, then cosine decay to `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub batch_size: usize,
    pub warmup_epochs: f64,
    pub total_epochs: f64,
    pub min_lr: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, batch_size: usize, warmup_epochs: f64, total_epochs: f64, min_lr: f64) -> Result<Self> {
        let s = LrSchedule {
            base_lr,
            batch_size,
            warmup_epochs,
            total_epochs,
            min_lr,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.total_epochs > 0.0) || !self.total_epochs.is_finite() {
            return Err(Error::config(format!(
                "total_epochs must be positive, got {}",
                self.total_epochs
            )));
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs < self.total_epochs) {
            return Err(Error::config(format!(
                "warmup_epochs ({}) must lie in [0, total_epochs = {})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.peak_lr()) {
            return Err(Error::config(format!(
                "min_lr ({}) must lie in [0, peak lr = {}]",
                self.min_lr,
                self.peak_lr()
            )));
        }
        Ok(())
    }

    /// Linear scale rule: `base_lr × batch_size / 256`.
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 256.0
    }

    pub fn lr_at(&self, epoch: f64) -> Result<f64> {
        if !(epoch >= 0.0 && epoch <= self.total_epochs) {
            return Err(Error::config(format!(
                "epoch {epoch} outside schedule range [0, {}]",
                self.total_epochs
            )));
        }
        let peak = self.peak_lr();
        if epoch < self.warmup_epochs {
            return Ok(peak * epoch / self.warmup_epochs);
        }
        let progress = (epoch - self.warmup_epochs) / (self.total_epochs - self.warmup_epochs);
        Ok(self.min_lr + (peak - self.min_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}
