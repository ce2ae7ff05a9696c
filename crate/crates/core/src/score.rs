//! Per-frame importance: hide one frame, reconstruct it from its strided
//! neighbourhood, and score the cosine dissimilarity to the original.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::FeatureSequence;
use crate::error::{Error, Result};
use crate::model::{single_mask, Autoencoder};
use crate::train::{materialize, ClipSpec};

pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub stride: usize,
    pub clip_len: usize,
    /// Window slot the scored frame should occupy; `None` means the lower
    /// middle, `clip_len / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_slot: Option<usize>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            stride: 2,
            clip_len: 30,
            target_slot: None,
        }
    }
}

impl ScoringConfig {
    pub fn slot(&self) -> usize {
        self.target_slot.unwrap_or(self.clip_len / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::config("scoring stride must be at least 1"));
        }
        if self.clip_len < 2 {
            return Err(Error::config(format!(
                "scoring clip_len must be at least 2, got {}",
                self.clip_len
            )));
        }
        if self.slot() >= self.clip_len {
            return Err(Error::config(format!(
                "target_slot {} outside window of {} frames",
                self.slot(),
                self.clip_len
            )));
        }
        Ok(())
    }
}

/// A scoring window and the position of the target frame inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start: usize,
    pub stride: usize,
    pub clip_len: usize,
    pub slot: usize,
}

impl Window {
    pub fn frames(&self) -> impl Iterator<Item = usize> {
        let (start, stride) = (self.start, self.stride);
        (0..self.clip_len).map(move |i| start + i * stride)
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start
            && (frame - self.start).is_multiple_of(self.stride)
            && (frame - self.start) / self.stride < self.clip_len
    }

    pub fn clip(&self, video_id: &str) -> ClipSpec {
        ClipSpec {
            video_id: video_id.to_string(),
            start: self.start,
            stride: self.stride,
            clip_len: self.clip_len,
        }
    }
}

/// Places frame `t` at the configured slot when the window fits. Near either
/// end the window slides (same stride) so it stays inside the video. If no
/// window at the configured stride can contain `t`, the stride is lowered to
/// the largest one that can.
pub fn window_for_target(num_frames: usize, t: usize, cfg: &ScoringConfig) -> Result<Window> {
    cfg.validate()?;
    let l = cfg.clip_len;
    if num_frames < l {
        return Err(Error::Scoring(format!(
            "video of {num_frames} frames is shorter than the {l}-frame scoring window"
        )));
    }
    if t >= num_frames {
        return Err(Error::usage(format!("frame {t} outside video of {num_frames} frames")));
    }
    let stride = (1..=cfg.stride)
        .rev()
        .find(|&s| t / s + (num_frames - 1 - t) / s >= l - 1)
        .expect("stride 1 always fits when num_frames >= clip_len");
    let before = t / stride;
    let after = (num_frames - 1 - t) / stride;
    let lo = (l - 1).saturating_sub(after);
    let slot = cfg.slot().clamp(lo, before.min(l - 1));
    Ok(Window {
        start: t - slot * stride,
        stride,
        clip_len: l,
        slot,
    })
}

/// `1 − cos(a, b)` with each norm floored at [`COSINE_EPS`].
pub fn cosine_dissimilarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let cos = dot / (na.sqrt().max(COSINE_EPS) * nb.sqrt().max(COSINE_EPS));
    (1.0 - cos).clamp(0.0, 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub score: f64,
    /// The original feature had (near-)zero norm, so the score is 1 by the
    /// epsilon guard rather than by similarity.
    pub zero_norm: bool,
}

pub fn score_frame(
    model: &Autoencoder<f32>,
    video: &FeatureSequence,
    t: usize,
    cfg: &ScoringConfig,
) -> Result<FrameScore> {
    check_compatible(model, video, cfg)?;
    let w = window_for_target(video.num_frames(), t, cfg)
        .map_err(|e| Error::Scoring(format!("video '{}', frame {t}: {e}", video.video_id)))?;
    let clip = materialize(&w.clip(&video.video_id), video)?;
    let plan = single_mask(cfg.clip_len, w.slot)?;
    let recon = model.forward(&clip, &plan)?;
    let target = model.target(&clip);
    let original = target.row(w.slot);
    let norm = original.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    Ok(FrameScore {
        score: cosine_dissimilarity(recon.row(w.slot), original),
        zero_norm: norm < COSINE_EPS,
    })
}

fn check_compatible(model: &Autoencoder<f32>, video: &FeatureSequence, cfg: &ScoringConfig) -> Result<()> {
    let mc = model.config();
    if mc.clip_len != cfg.clip_len {
        return Err(Error::config(format!(
            "scoring clip_len {} differs from the model's {}",
            cfg.clip_len, mc.clip_len
        )));
    }
    if mc.input_dim != video.feature_dim() {
        return Err(Error::usage(format!(
            "video '{}' has {}-d features, model expects {}-d",
            video.video_id,
            video.feature_dim(),
            mc.input_dim
        )));
    }
    Ok(())
}

/// One importance score per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceCurve {
    pub video_id: String,
    pub scores: Vec<f64>,
    /// Frames whose original feature had zero norm.
    pub zero_norm_frames: Vec<usize>,
}

impl ImportanceCurve {
    pub fn new(video_id: impl Into<String>, scores: Vec<f64>) -> Self {
        ImportanceCurve {
            video_id: video_id.into(),
            scores,
            zero_norm_frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Scores every frame. Frames are independent, so they run in parallel; the
/// result does not depend on the thread count.
pub fn score_video(model: &Autoencoder<f32>, video: &FeatureSequence, cfg: &ScoringConfig) -> Result<ImportanceCurve> {
    check_compatible(model, video, cfg)?;
    window_for_target(video.num_frames(), 0, cfg)
        .map_err(|e| Error::Scoring(format!("video '{}': {e}", video.video_id)))?;
    let frames: Vec<FrameScore> = (0..video.num_frames())
        .into_par_iter()
        .map(|t| score_frame(model, video, t, cfg))
        .collect::<Result<_>>()?;
    Ok(ImportanceCurve {
        video_id: video.video_id.clone(),
        scores: frames.iter().map(|f| f.score).collect(),
        zero_norm_frames: frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.zero_norm)
            .map(|(t, _)| t)
            .collect(),
    })
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    frame_index: usize,
    score: f64,
}

/// Writes `frame_index,score` rows.
pub fn write_curve_csv(curve: &ImportanceCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (frame_index, &score) in curve.scores.iter().enumerate() {
        w.serialize(CurveRow { frame_index, score })
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a curve written by [`write_curve_csv`]; the video id is taken from
/// the file stem.
pub fn read_curve_csv(path: &Path) -> Result<ImportanceCurve> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut scores = Vec::new();
    for row in r.deserialize::<CurveRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.frame_index != scores.len() {
            return Err(Error::format(
                path,
                0,
                format!("expected frame {}, found {}", scores.len(), row.frame_index),
            ));
        }
        scores.push(row.score);
    }
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    Ok(ImportanceCurve::new(id, scores))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::format(path, offset, format!("{kind:?}")),
    }
}

/// Lists curve CSVs in `dir`, sorted by file name.
pub fn read_curve_dir(dir: &Path) -> Result<Vec<ImportanceCurve>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_curve_csv(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::{SeedStream, Tensor};

    fn cfg(stride: usize, clip_len: usize) -> ScoringConfig {
        ScoringConfig {
            stride,
            clip_len,
            target_slot: None,
        }
    }

    #[test]
    fn interior_window_is_centred() {
        let w = window_for_target(100, 50, &ScoringConfig::default()).unwrap();
        assert_eq!((w.start, w.stride, w.slot), (20, 2, 15));
        assert_eq!(w.frames().last(), Some(78));
    }

    #[test]
    fn boundary_windows_slide() {
        let w = window_for_target(100, 0, &ScoringConfig::default()).unwrap();
        assert_eq!((w.start, w.stride, w.slot), (0, 2, 0));
        assert_eq!(w.frames().last(), Some(58));
        let w = window_for_target(35, 34, &ScoringConfig::default()).unwrap();
        assert_eq!((w.start, w.stride, w.slot), (5, 1, 29));
    }

    #[test]
    fn too_short_video() {
        assert!(matches!(
            window_for_target(29, 0, &ScoringConfig::default()),
            Err(Error::Scoring(_))
        ));
    }

    /// Brute force over every window of stride `<= cfg.stride` that contains
    /// `t`: the chosen stride must be the largest available and the slot the
    /// closest available to the configured one.
    #[test]
    fn exhaustive_small_cases() {
        for l in 2..=6 {
            for s in 1..=4 {
                for slot in 0..l {
                    let c = ScoringConfig {
                        stride: s,
                        clip_len: l,
                        target_slot: Some(slot),
                    };
                    for n in l..=24 {
                        for t in 0..n {
                            let w = window_for_target(n, t, &c).unwrap();
                            assert!(w.contains(t) && w.start + w.slot * w.stride == t);
                            assert!(w.frames().all(|f| f < n));
                            let feasible =
                                |st: usize| (0..l).filter(move |&j| j * st <= t && t - j * st + (l - 1) * st < n);
                            let best = (1..=s).rev().find(|&st| feasible(st).next().is_some()).unwrap();
                            assert_eq!(w.stride, best, "n={n} t={t} l={l} s={s}");
                            let closest = feasible(best).map(|j| j.abs_diff(slot)).min().unwrap();
                            assert_eq!(w.slot.abs_diff(slot), closest, "n={n} t={t} l={l} s={s} slot={slot}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -0.5];
        assert!(cosine_dissimilarity(&a, &a).abs() < 1e-12);
        assert!((cosine_dissimilarity(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-12);
        let neg: Vec<f32> = a.iter().map(|v| -v).collect();
        assert!((cosine_dissimilarity(&neg, &a) - 2.0).abs() < 1e-12);
        assert_eq!(cosine_dissimilarity(&[1.0, 1.0], &[0.0, 0.0]), 1.0);
    }

    fn toy_video(frames: usize) -> FeatureSequence {
        let data = (0..frames * 8).map(|i| ((i * 7 % 13) as f32 - 6.0) / 6.0).collect();
        FeatureSequence::new("toy", 25.0, Tensor::new(vec![frames, 8], data).unwrap()).unwrap()
    }

    #[test]
    fn curve_shape_range_and_purity() {
        let model = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(1)).unwrap();
        let v = toy_video(40);
        let c = cfg(2, 6);
        let a = score_video(&model, &v, &c).unwrap();
        assert_eq!(a.len(), 40);
        assert!(a.scores.iter().all(|s| (0.0..=2.0).contains(s)));
        let b = score_video(&model, &v, &c).unwrap();
        assert_eq!(
            a.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
            b.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn score_depends_only_on_window() {
        let model = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(1)).unwrap();
        let v = toy_video(40);
        let c = cfg(2, 6);
        let t = 20;
        let w = window_for_target(40, t, &c).unwrap();
        let before = score_frame(&model, &v, t, &c).unwrap();
        let mut changed = v.clone();
        for f in (0..40).filter(|&f| !w.contains(f)) {
            changed.frames.row_mut(f).iter_mut().for_each(|x| *x = 9.0);
        }
        assert_eq!(score_frame(&model, &changed, t, &c).unwrap(), before);
        let inside = w.frames().find(|&f| f != t).unwrap();
        changed.frames.row_mut(inside)[0] += 5.0;
        assert_ne!(score_frame(&model, &changed, t, &c).unwrap(), before);
    }

    #[test]
    fn zero_feature_flagged() {
        let model = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(1)).unwrap();
        let mut v = toy_video(20);
        v.frames.row_mut(7).iter_mut().for_each(|x| *x = 0.0);
        let curve = score_video(&model, &v, &cfg(2, 6)).unwrap();
        assert_eq!(curve.zero_norm_frames, vec![7]);
        assert_eq!(curve.scores[7], 1.0);
    }

    #[test]
    fn clip_len_mismatch_is_config_error() {
        let model = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(1)).unwrap();
        assert!(matches!(
            score_video(&model, &toy_video(40), &ScoringConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn curve_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("video_3.csv");
        let c = ImportanceCurve::new("video_3", vec![0.0, 0.125, 1.9999999999, 1e-17]);
        write_curve_csv(&c, &p).unwrap();
        assert!(fs::read_to_string(&p)
            .unwrap()
            .starts_with("frame_index,score\n0,0.0\n"));
        assert_eq!(read_curve_csv(&p).unwrap(), c);
        assert_eq!(read_curve_dir(dir.path()).unwrap(), vec![c]);
    }
}
