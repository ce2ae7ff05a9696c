//! Clip sampling with fixed or random temporal stride.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// How the gap between consecutive clip frames is chosen.
///
/// Written as `"4"` (fixed) or `"rand(1,8)"` (uniform over the inclusive
/// range) in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StridePolicy {
    Fixed(usize),
    UniformRandom { lo: usize, hi: usize },
}

impl StridePolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StridePolicy::Fixed(0) => Err(Error::config("fixed stride must be at least 1")),
            StridePolicy::UniformRandom { lo, hi } if lo == 0 || lo > hi => Err(Error::config(format!(
                "stride range rand({lo},{hi}) needs 1 <= lo <= hi"
            ))),
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            StridePolicy::Fixed(s) => s,
            StridePolicy::UniformRandom { lo, hi } => rng.gen_range(lo..=hi),
        }
    }
}

impl Default for StridePolicy {
    fn default() -> Self {
        StridePolicy::UniformRandom { lo: 1, hi: 8 }
    }
}

impl fmt::Display for StridePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StridePolicy::Fixed(s) => write!(f, "{s}"),
            StridePolicy::UniformRandom { lo, hi } => write!(f, "rand({lo},{hi})"),
        }
    }
}

impl FromStr for StridePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("stride policy '{s}' is neither an integer nor rand(lo,hi)"));
        let t = s.trim();
        let policy = if let Some(inner) = t.strip_prefix("rand(").and_then(|r| r.strip_suffix(')')) {
            let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
            StridePolicy::UniformRandom {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: hi.trim().parse().map_err(|_| bad())?,
            }
        } else {
            StridePolicy::Fixed(t.parse().map_err(|_| bad())?)
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl TryFrom<String> for StridePolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StridePolicy> for String {
    fn from(p: StridePolicy) -> String {
        p.to_string()
    }
}

/// A strided window into one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClipSpec {
    pub video_id: String,
    pub start: usize,
    pub stride: usize,
    pub clip_len: usize,
}

impl ClipSpec {
    /// Frame indices covered, in order.
    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.clip_len).map(move |i| self.start + i * self.stride)
    }

    pub fn last_frame(&self) -> usize {
        self.start + (self.clip_len - 1) * self.stride
    }
}

impl fmt::Display for ClipSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[start {}, stride {}, len {}]",
            self.video_id, self.start, self.stride, self.clip_len
        )
    }
}

/// Largest stride whose `clip_len`-frame window fits in `num_frames`.
pub fn max_feasible_stride(num_frames: usize, clip_len: usize) -> usize {
    (num_frames - 1) / (clip_len - 1)
}

/// Draws a stride from `policy` (clamped down if the window would not fit),
/// then a uniform start position.
pub fn sample_clip<R: Rng + ?Sized>(
    video: &FeatureSequence,
    policy: StridePolicy,
    clip_len: usize,
    rng: &mut R,
) -> Result<ClipSpec> {
    if clip_len < 2 {
        return Err(Error::usage(format!("clip_len must be at least 2, got {clip_len}")));
    }
    let n = video.num_frames();
    if n < clip_len {
        return Err(Error::Sampling(format!(
            "video '{}' has {n} frames, shorter than one {clip_len}-frame clip",
            video.video_id
        )));
    }
    let stride = policy.draw(rng).min(max_feasible_stride(n, clip_len));
    let span = 1 + (clip_len - 1) * stride;
    let start = rng.gen_range(0..=n - span);
    Ok(ClipSpec {
        video_id: video.video_id.clone(),
        start,
        stride,
        clip_len,
    })
}

/// Gathers the rows `start, start + stride, …` of `video`.
pub fn materialize(clip: &ClipSpec, video: &FeatureSequence) -> Result<Tensor<f32>> {
    if clip.clip_len == 0 || clip.stride == 0 || clip.last_frame() >= video.num_frames() {
        return Err(Error::usage(format!(
            "clip {clip} does not fit video '{}' of {} frames",
            video.video_id,
            video.num_frames()
        )));
    }
    let rows: Vec<usize> = clip.frames().collect();
    Ok(video.frames.gather_rows(&rows))
}
