//! Ground-truth annotation files (JSON).
//!
//! ```json
//! {
//!   "video_id": "video_1",
//!   "fps": 30.0,
//!   "user_scores": [[1, 1, 3, 3, ...], [2, 2, 2, 5, ...]],
//!   "change_points": [[0, 45], [45, 120], ...],
//!   "n_frame_per_seg": [45, 75, ...]
//! }
//! ```
//!
//! `user_scores` has one row per annotator and one value per frame. Change
//! points are half-open `[start, end)` frame ranges that must tile the whole
//! video; they and `n_frame_per_seg` are optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    pub video_id: String,
    pub fps: f64,
    pub user_scores: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_points: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_frame_per_seg: Option<Vec<usize>>,
}

impl AnnotationSet {
    pub fn num_frames(&self) -> usize {
        self.user_scores.first().map_or(0, Vec::len)
    }

    pub fn num_annotators(&self) -> usize {
        self.user_scores.len()
    }

    /// True when every score is exactly 0 or 1 (keyshot-style annotation).
    pub fn is_binary(&self) -> bool {
        self.user_scores.iter().flatten().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Frame-wise mean over annotators.
    pub fn mean_scores(&self) -> Vec<f64> {
        let n = self.num_frames();
        let k = self.num_annotators() as f64;
        (0..n)
            .map(|t| self.user_scores.iter().map(|r| r[t]).sum::<f64>() / k)
            .collect()
    }

    /// Checks the structural invariants; `reason` carries the first problem.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.user_scores.is_empty() {
            return Err("no annotator rows".into());
        }
        let n = self.num_frames();
        if n == 0 {
            return Err("annotator rows are empty".into());
        }
        for (i, row) in self.user_scores.iter().enumerate() {
            if row.len() != n {
                return Err(format!("annotator {i} has {} frames, annotator 0 has {n}", row.len()));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(format!("annotator {i} has a non-finite score at frame {t}"));
            }
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        if let Some(cps) = &self.change_points {
            check_change_points(cps, n)?;
            if let Some(counts) = &self.n_frame_per_seg {
                if counts.len() != cps.len() {
                    return Err(format!(
                        "n_frame_per_seg has {} entries for {} segments",
                        counts.len(),
                        cps.len()
                    ));
                }
                for (i, (&c, &(s, e))) in counts.iter().zip(cps).enumerate() {
                    if c != e - s {
                        return Err(format!("segment {i} spans {} frames, n_frame_per_seg says {c}", e - s));
                    }
                }
            }
        } else if self.n_frame_per_seg.is_some() {
            return Err("n_frame_per_seg given without change_points".into());
        }
        Ok(())
    }
}

pub(crate) fn check_change_points(cps: &[(usize, usize)], num_frames: usize) -> std::result::Result<(), String> {
    if cps.is_empty() {
        return Err("change_points is empty".into());
    }
    let mut expected_start = 0;
    for (i, &(s, e)) in cps.iter().enumerate() {
        if s != expected_start {
            return Err(format!(
                "segment {i} starts at {s}, expected {expected_start} (gap or overlap)"
            ));
        }
        if e <= s {
            return Err(format!("segment {i} [{s}, {e}) is empty or reversed"));
        }
        expected_start = e;
    }
    if expected_start != num_frames {
        return Err(format!(
            "change points cover [0, {expected_start}), video has {num_frames} frames"
        ));
    }
    Ok(())
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<AnnotationSet> {
    let ann: AnnotationSet = serde_json::from_str(text).map_err(|e| {
        let offset = text
            .lines()
            .take(e.line().saturating_sub(1))
            .map(|l| l.len() + 1)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::format(path, offset as u64, e.to_string())
    })?;
    ann.check().map_err(|reason| Error::format(path, 0, reason))?;
    Ok(ann)
}

pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}

pub fn write_annotations(ann: &AnnotationSet, path: &Path) -> Result<()> {
    ann.check()
        .map_err(|reason| Error::usage(format!("refusing to write invalid annotations: {reason}")))?;
    let text = serde_json::to_string_pretty(ann).map_err(|e| Error::usage(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<AnnotationSet> {
        parse_annotations(s, Path::new("a.json"))
    }

    #[test]
    fn tvsum_style() {
        let rows: Vec<Vec<u8>> = (0..20)
            .map(|a| (0..12).map(|t| 1 + ((t / 3 + a) % 5) as u8).collect())
            .collect();
        let text = serde_json::json!({
            "video_id": "video_1", "fps": 30.0, "user_scores": rows,
            "change_points": [[0, 3], [3, 6], [6, 9], [9, 12]],
            "n_frame_per_seg": [3, 3, 3, 3]
        })
        .to_string();
        let a = parse(&text).unwrap();
        assert_eq!(a.num_annotators(), 20);
        assert_eq!(a.num_frames(), 12);
        assert!(a
            .user_scores
            .iter()
            .flatten()
            .all(|&v| (1.0..=5.0).contains(&v) && v.fract() == 0.0));
        assert!(!a.is_binary());
    }

    #[test]
    fn summe_and_finegym_style() {
        let a = parse(r#"{"video_id":"s","fps":25,"user_scores":[[0,1,1,0],[1,1,0,0]]}"#).unwrap();
        assert!(a.is_binary());
        let g = parse(r#"{"video_id":"g","fps":25,"user_scores":[[0,0,1,1,0]]}"#).unwrap();
        assert_eq!(g.num_annotators(), 1);
        assert!(g.change_points.is_none());
    }

    #[test]
    fn ragged_rows_rejected() {
        let e = parse(r#"{"video_id":"s","fps":25,"user_scores":[[0,1,1],[1,1]]}"#).unwrap_err();
        assert!(matches!(e, Error::Format { .. }));
        assert!(e.to_string().contains("annotator 1"));
    }

    #[test]
    fn non_covering_change_points_rejected() {
        for cps in ["[[0,2],[3,4]]", "[[0,2],[1,4]]", "[[0,2],[2,3]]", "[[0,2],[2,2],[2,4]]"] {
            let text = format!(r#"{{"video_id":"s","fps":25,"user_scores":[[0,1,1,0]],"change_points":{cps}}}"#);
            assert!(parse(&text).is_err(), "{cps}");
        }
    }

    #[test]
    fn unknown_field_and_syntax_errors() {
        assert!(parse(r#"{"video_id":"s","fps":25,"user_scores":[[0]],"extra":1}"#).is_err());
        let e = parse("{\n  \"video_id\": ,\n}").unwrap_err();
        assert!(matches!(e, Error::Format { offset, .. } if offset > 0));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let a = AnnotationSet {
            video_id: "v".into(),
            fps: 29.97,
            user_scores: vec![vec![1.0, 2.5, 3.0], vec![0.0, 0.0, 1.0]],
            change_points: Some(vec![(0, 1), (1, 3)]),
            n_frame_per_seg: Some(vec![1, 2]),
        };
        write_annotations(&a, &p).unwrap();
        assert_eq!(load_annotations(&p).unwrap(), a);
    }
}
