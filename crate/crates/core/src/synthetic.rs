//! Synthetic feature corpora and annotations with known structure.
//!
//! Videos are runs ("shots") of a few shared motif vectors plus small noise,
//! with a fraction of isolated frames replaced by outlier vectors whose
//! cosine similarity to every motif is at most [`MAX_OUTLIER_COSINE`].
//! Values are non-negative like pooled CNN activations.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datastore::{AnnotationSet, FeatureSequence};
use crate::error::{Error, Result};
use crate::numerics::{SeedStream, StreamRng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub videos: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub feature_dim: usize,
    pub motifs: usize,
    pub outlier_fraction: f64,
    pub min_shot: usize,
    pub max_shot: usize,
    pub noise_std: f64,
    pub fps: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            videos: 20,
            min_frames: 120,
            max_frames: 200,
            feature_dim: 8,
            motifs: 3,
            outlier_fraction: 0.05,
            min_shot: 15,
            max_shot: 40,
            noise_std: 0.05,
            fps: 30.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub features: FeatureSequence,
    /// Outlier frame indices, ascending.
    pub outliers: Vec<usize>,
    /// Half-open shot ranges, covering the video.
    pub shots: Vec<(usize, usize)>,
}

pub const MAX_OUTLIER_COSINE: f32 = 0.5;

fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    dot / (na * nb).max(1e-12)
}

/// Rejection-samples a sparse vector (half-normal on a random quarter of the
/// dimensions) unlike every motif.
fn novel_vector(motifs: &[Vec<f32>], rng: &mut StreamRng) -> Result<Vec<f32>> {
    let dim = motifs[0].len();
    let active = (dim / 4).max(1);
    for _ in 0..10_000 {
        let dense = half_normal(dim, rng);
        let mut v = vec![0.0; dim];
        for i in sample(rng, dim, active) {
            v[i] = dense[i];
        }
        if motifs.iter().all(|m| cosine(&v, m) <= MAX_OUTLIER_COSINE) {
            return Ok(v);
        }
    }
    Err(Error::config(
        "could not draw an outlier unlike the motifs; raise feature_dim",
    ))
}

fn half_normal(dim: usize, rng: &mut StreamRng) -> Vec<f32> {
    let n = Normal::new(0.0f32, 1.0).expect("unit normal");
    (0..dim).map(|_| n.sample(rng).abs()).collect()
}

pub fn synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<SyntheticVideo>> {
    if spec.videos == 0 || spec.motifs == 0 || spec.feature_dim == 0 {
        return Err(Error::config(
            "synthetic corpus needs videos, motifs and a feature dimension",
        ));
    }
    if spec.min_frames == 0 || spec.min_frames > spec.max_frames || spec.min_shot == 0 || spec.min_shot > spec.max_shot
    {
        return Err(Error::config("synthetic frame and shot ranges must be non-empty"));
    }
    if !(0.0..0.5).contains(&spec.outlier_fraction) {
        return Err(Error::config("outlier fraction must lie in [0, 0.5)"));
    }
    let seeds = SeedStream::new(spec.seed);
    let mut rng = seeds.rng("synthetic-motifs", 0);
    let motifs: Vec<Vec<f32>> = (0..spec.motifs)
        .map(|_| half_normal(spec.feature_dim, &mut rng))
        .collect();
    let noise = Normal::new(0.0f32, spec.noise_std as f32).map_err(|e| Error::config(e.to_string()))?;

    (0..spec.videos)
        .map(|v| {
            let mut rng = seeds.rng("synthetic-video", v as u64);
            let n = rng.gen_range(spec.min_frames..=spec.max_frames);
            let mut shots = Vec::new();
            let mut start = 0;
            let mut last_motif = usize::MAX;
            let mut data = Vec::with_capacity(n * spec.feature_dim);
            while start < n {
                let end = (start + rng.gen_range(spec.min_shot..=spec.max_shot)).min(n);
                let mut m = rng.gen_range(0..spec.motifs);
                if spec.motifs > 1 && m == last_motif {
                    m = (m + 1 + rng.gen_range(0..spec.motifs - 1)) % spec.motifs;
                }
                last_motif = m;
                for _ in start..end {
                    data.extend(motifs[m].iter().map(|&x| (x + noise.sample(&mut rng)).max(0.0)));
                }
                shots.push((start, end));
                start = end;
            }
            // Outliers sit on even frames, so no two are adjacent.
            let k = (spec.outlier_fraction * n as f64).round() as usize;
            let mut outliers: Vec<usize> = sample(&mut rng, n / 2, k.min(n / 2))
                .into_iter()
                .map(|i| 2 * i)
                .collect();
            outliers.sort_unstable();
            for &t in &outliers {
                let o = novel_vector(&motifs, &mut rng)?;
                data[t * spec.feature_dim..(t + 1) * spec.feature_dim].copy_from_slice(&o);
            }
            let frames = Tensor::new(vec![n, spec.feature_dim], data)?;
            Ok(SyntheticVideo {
                features: FeatureSequence::new(format!("synth_{v:03}"), spec.fps, frames)?,
                outliers,
                shots,
            })
        })
        .collect()
}

/// Graded annotations: `annotators` rows of integer scores in 1..=5,
/// constant over shots of `shot_frames` frames. Each annotator perturbs a
/// shared per-shot importance, so the rows agree partially.
pub fn graded_annotations(
    video_id: &str,
    num_frames: usize,
    annotators: usize,
    shot_frames: usize,
    rng: &mut StreamRng,
) -> AnnotationSet {
    let shot_frames = shot_frames.max(1);
    let cps: Vec<(usize, usize)> = (0..num_frames)
        .step_by(shot_frames)
        .map(|s| (s, (s + shot_frames).min(num_frames)))
        .collect();
    let base: Vec<f64> = cps.iter().map(|_| rng.gen_range(1.0..5.0)).collect();
    let user_scores = (0..annotators)
        .map(|_| {
            let shot_scores: Vec<f64> = base
                .iter()
                .map(|&b| (b + rng.gen_range(-1.5..1.5)).round().clamp(1.0, 5.0))
                .collect();
            cps.iter()
                .zip(&shot_scores)
                .flat_map(|(&(s, e), &v)| std::iter::repeat_n(v, e - s))
                .collect()
        })
        .collect();
    AnnotationSet {
        video_id: video_id.to_string(),
        fps: 30.0,
        user_scores,
        n_frame_per_seg: Some(cps.iter().map(|(s, e)| e - s).collect()),
        change_points: Some(cps),
    }
}

/// Binary keyshot annotations: each annotator marks roughly `fraction` of
/// the frames, chosen as whole shots.
pub fn binary_annotations(
    video_id: &str,
    num_frames: usize,
    annotators: usize,
    shot_frames: usize,
    fraction: f64,
    rng: &mut StreamRng,
) -> AnnotationSet {
    let mut graded = graded_annotations(video_id, num_frames, annotators, shot_frames, rng);
    for row in &mut graded.user_scores {
        let mut marked = 0usize;
        let budget = (fraction * num_frames as f64).round() as usize;
        for &(s, e) in graded.change_points.as_ref().unwrap() {
            let keep = row[s] >= 4.0 && marked + (e - s) <= budget;
            if keep {
                marked += e - s;
            }
            row[s..e].iter_mut().for_each(|v| *v = if keep { 1.0 } else { 0.0 });
        }
    }
    graded
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_structure() {
        let spec = SyntheticSpec::default();
        let c = synthetic_corpus(&spec).unwrap();
        assert_eq!(c.len(), 20);
        for v in &c {
            let n = v.features.num_frames();
            assert!((120..=200).contains(&n));
            assert_eq!(v.outliers.len(), (0.05 * n as f64).round() as usize);
            assert!(v.outliers.windows(2).all(|w| w[1] > w[0] + 1));
            assert_eq!(v.shots.first().unwrap().0, 0);
            assert_eq!(v.shots.last().unwrap().1, n);
            assert!(v.features.frames.data().iter().all(|&x| x >= 0.0));
            for &t in &v.outliers {
                let o = v.features.frames.row(t);
                let (s, e) = *v.shots.iter().find(|&&(s, e)| (s..e).contains(&t)).unwrap();
                let other = (s..e).find(|f| !v.outliers.contains(f)).unwrap();
                assert!(cosine(o, v.features.frames.row(other)) < MAX_OUTLIER_COSINE + 0.05);
            }
        }
        let again = synthetic_corpus(&spec).unwrap();
        assert_eq!(again[3].features, c[3].features);
    }

    #[test]
    fn annotations_are_valid() {
        let mut rng = SeedStream::new(0).rng("ann", 0);
        let g = graded_annotations("v", 95, 20, 10, &mut rng);
        g.check().unwrap();
        assert_eq!(g.num_annotators(), 20);
        assert!(g
            .user_scores
            .iter()
            .flatten()
            .all(|&v| (1.0..=5.0).contains(&v) && v.fract() == 0.0));
        let b = binary_annotations("v", 95, 15, 10, 0.15, &mut rng);
        b.check().unwrap();
        assert!(b.is_binary());
    }
}
