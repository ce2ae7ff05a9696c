use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which positions of a clip are hidden from the encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    clip_len: usize,
    masked: Vec<usize>,
}

impl MaskPlan {
    /// Builds a plan from any listing of positions; order and duplicates in
    /// the listing do not matter, the plan stores the sorted set.
    pub fn new(clip_len: usize, positions: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut masked: Vec<usize> = positions.into_iter().collect();
        masked.sort_unstable();
        masked.dedup();
        if let Some(&p) = masked.iter().find(|&&p| p >= clip_len) {
            return Err(Error::usage(format!(
                "mask position {p} outside clip of length {clip_len}"
            )));
        }
        if masked.is_empty() || masked.len() >= clip_len {
            return Err(Error::usage(format!(
                "mask must hide between 1 and {} of {clip_len} frames, got {}",
                clip_len.saturating_sub(1),
                masked.len()
            )));
        }
        Ok(MaskPlan { clip_len, masked })
    }

    pub fn clip_len(&self) -> usize {
        self.clip_len
    }

    /// Strictly increasing masked positions.
    pub fn masked(&self) -> &[usize] {
        &self.masked
    }

    /// Strictly increasing visible positions.
    pub fn visible(&self) -> Vec<usize> {
        let mut it = self.masked.iter().peekable();
        (0..self.clip_len)
            .filter(|p| {
                if it.peek() == Some(&p) {
                    it.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }

    pub fn is_masked(&self, position: usize) -> bool {
        self.masked.binary_search(&position).is_ok()
    }
}

/// Number of frames hidden at `mask_ratio`, validated.
pub fn masked_count(clip_len: usize, mask_ratio: f64) -> Result<usize> {
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::config(format!(
            "mask_ratio must lie in (0, 1), got {mask_ratio}"
        )));
    }
    let k = (mask_ratio * clip_len as f64).round() as usize;
    if k == 0 || k >= clip_len {
        return Err(Error::config(format!(
            "mask_ratio {mask_ratio} hides {k} of {clip_len} frames; need 1..{clip_len}"
        )));
    }
    Ok(k)
}

/// Hides `round(mask_ratio × clip_len)` positions drawn uniformly without
/// replacement.
pub fn random_mask<R: Rng + ?Sized>(clip_len: usize, mask_ratio: f64, rng: &mut R) -> Result<MaskPlan> {
    let k = masked_count(clip_len, mask_ratio)?;
    MaskPlan::new(clip_len, index::sample(rng, clip_len, k))
}

/// Hides exactly `target`.
pub fn single_mask(clip_len: usize, target: usize) -> Result<MaskPlan> {
    if target >= clip_len {
        return Err(Error::usage(format!(
            "target index {target} outside clip of length {clip_len}"
        )));
    }
    MaskPlan::new(clip_len, [target])
}
