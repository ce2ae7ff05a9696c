//! Dataset manifests (TOML).
//!
//! ```toml
//! name = "tvsum"
//! roles = ["train", "eval"]
//! long_videos = true
//!
//! [[videos]]
//! id = "video_1"
//! features = "features/video_1.vft"
//! annotations = "annotations/video_1.json"
//! ```
//!
//! Relative paths resolve against the directory holding the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datastore::annotations::{load_annotations, AnnotationSet};
use crate::datastore::features::{peek_header, read_features, FeatureSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Videos used for self-supervised training.
    Train,
    /// Annotated videos used as an evaluation target.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub id: String,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default = "default_roles")]
    pub roles: Vec<Role>,
    /// Long summarization videos draw several clips per video per epoch.
    #[serde(default)]
    pub long_videos: bool,
    pub videos: Vec<VideoEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_roles() -> Vec<Role> {
    vec![Role::Train]
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: &Path, path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start) as u64;
            Error::format(path, offset, e.message().to_string())
        })?;
        m.base_dir = base_dir.to_path_buf();
        m.check().map_err(|reason| Error::format(path, 0, reason))?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.check().map_err(Error::usage)?;
        let text = toml::to_string_pretty(self).map_err(|e| Error::usage(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn check(&self) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.id.as_str()) {
                return Err(format!("duplicate video id '{}'", v.id));
            }
        }
        if self.has_role(Role::Eval) {
            let missing: Vec<&str> = self
                .videos
                .iter()
                .filter(|v| v.annotations.is_none())
                .map(|v| v.id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(format!(
                    "evaluation manifest lacks annotations for: {}",
                    missing.join(", ")
                ));
            }
        }
        Ok(())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.videos.iter().map(|v| v.id.as_str())
    }

    pub fn entry(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn features_path(&self, entry: &VideoEntry) -> PathBuf {
        self.resolve(&entry.features)
    }

    pub fn annotations_path(&self, entry: &VideoEntry) -> Option<PathBuf> {
        entry.annotations.as_deref().map(|p| self.resolve(p))
    }

    /// Reads every feature file, in manifest order.
    pub fn load_features(&self) -> Result<Vec<FeatureSequence>> {
        self.videos
            .iter()
            .map(|v| read_features(&self.features_path(v)))
            .collect()
    }

    /// Reads every annotation file, keyed by video id.
    pub fn load_annotations(&self) -> Result<BTreeMap<String, AnnotationSet>> {
        let mut out = BTreeMap::new();
        for v in &self.videos {
            let path = self
                .annotations_path(v)
                .ok_or_else(|| Error::usage(format!("video '{}' has no annotation file", v.id)))?;
            out.insert(v.id.clone(), load_annotations(&path)?);
        }
        Ok(out)
    }
}

/// One problem found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub video_ids: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub videos_checked: usize,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Scans every entry and collects problems instead of stopping at the first.
pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut dims: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut issue = |ids: &[&str], message: String| {
        report.issues.push(Issue {
            video_ids: ids.iter().map(|s| s.to_string()).collect(),
            message,
        })
    };
    for v in &manifest.videos {
        let id = v.id.as_str();
        let fpath = manifest.features_path(v);
        let header = match peek_header(&fpath) {
            Ok(h) => Some(h),
            Err(e) => {
                issue(&[id], format!("features unreadable: {e}"));
                None
            }
        };
        if let Some((file_id, dim, frames, _)) = &header {
            dims.entry(*dim).or_default().push(id.to_string());
            if file_id != id {
                issue(&[id], format!("feature file declares video id '{file_id}'"));
            }
            if let Ok(meta) = fs::metadata(&fpath) {
                let expected = 24 + file_id.len() as u64 + 4 * (*dim as u64) * (*frames as u64);
                if meta.len() != expected {
                    issue(
                        &[id],
                        format!("feature file is {} bytes, header implies {expected}", meta.len()),
                    );
                }
            }
        }
        if let Some(apath) = manifest.annotations_path(v) {
            match load_annotations(&apath) {
                Ok(ann) => {
                    if ann.video_id != id {
                        issue(&[id], format!("annotation file declares video id '{}'", ann.video_id));
                    }
                    if let Some((_, _, frames, _)) = &header {
                        if ann.num_frames() != *frames {
                            issue(
                                &[id],
                                format!("features have {frames} frames, annotations have {}", ann.num_frames()),
                            );
                        }
                    }
                }
                Err(e) => issue(&[id], format!("annotations unreadable: {e}")),
            }
        } else if manifest.has_role(Role::Eval) {
            issue(&[id], "no annotation file for an evaluation video".into());
        }
        report.videos_checked += 1;
    }
    if dims.len() > 1 {
        let majority = dims.iter().max_by_key(|(_, ids)| ids.len()).map(|(d, _)| *d).unwrap();
        let offenders: Vec<&str> = dims
            .iter()
            .filter(|(d, _)| **d != majority)
            .flat_map(|(_, ids)| ids.iter().map(String::as_str))
            .collect();
        let summary: Vec<String> = dims.iter().map(|(d, ids)| format!("{d}-d: {}", ids.len())).collect();
        issue(
            &offenders,
            format!(
                "mixed feature dimensions ({}); majority is {majority}",
                summary.join(", ")
            ),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::annotations::write_annotations;
    use crate::datastore::features::write_features;
    use crate::numerics::Tensor;

    fn write_video(dir: &Path, id: &str, frames: usize, dim: usize, ann_frames: usize) -> VideoEntry {
        let seq = FeatureSequence::new(id, 30.0, Tensor::filled(&[frames, dim], 0.5)).unwrap();
        let f = PathBuf::from(format!("{id}.vft"));
        write_features(&seq, &dir.join(&f)).unwrap();
        let ann = AnnotationSet {
            video_id: id.into(),
            fps: 30.0,
            user_scores: vec![vec![1.0; ann_frames]],
            change_points: None,
            n_frame_per_seg: None,
        };
        let a = PathBuf::from(format!("{id}.json"));
        write_annotations(&ann, &dir.join(&a)).unwrap();
        VideoEntry {
            id: id.into(),
            features: f,
            annotations: Some(a),
        }
    }

    fn manifest(dir: &Path, videos: Vec<VideoEntry>) -> DatasetManifest {
        DatasetManifest {
            name: "toy".into(),
            roles: vec![Role::Train, Role::Eval],
            long_videos: true,
            videos,
            base_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn toml_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path(), vec![write_video(dir.path(), "a", 4, 2, 4)]);
        let path = dir.path().join("m.toml");
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.features_path(&back.videos[0]), dir.path().join("a.vft"));
    }

    #[test]
    fn duplicate_ids_and_unknown_keys_rejected() {
        let text = "name = 'x'\n[[videos]]\nid = 'a'\nfeatures = 'a'\n[[videos]]\nid = 'a'\nfeatures = 'b'\n";
        assert!(DatasetManifest::parse(text, Path::new("."), Path::new("m")).is_err());
        let text = "name = 'x'\ncolour = 1\nvideos = []\n";
        let e = DatasetManifest::parse(text, Path::new("."), Path::new("m")).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
    }

    #[test]
    fn eval_role_requires_annotations() {
        let text = "name = 'x'\nroles = ['eval']\n[[videos]]\nid = 'a'\nfeatures = 'a'\n";
        assert!(DatasetManifest::parse(text, Path::new("."), Path::new("m")).is_err());
    }

    #[test]
    fn consistent_manifest_has_no_issues() {
        let dir = tempfile::tempdir().unwrap();
        let vids = vec![
            write_video(dir.path(), "a", 5, 3, 5),
            write_video(dir.path(), "b", 7, 3, 7),
        ];
        let r = validate_manifest(&manifest(dir.path(), vids));
        assert_eq!(r.videos_checked, 2);
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn frame_count_mismatch_names_video() {
        let dir = tempfile::tempdir().unwrap();
        let vids = vec![
            write_video(dir.path(), "a", 5, 3, 5),
            write_video(dir.path(), "b", 7, 3, 6),
        ];
        let r = validate_manifest(&manifest(dir.path(), vids));
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].video_ids, vec!["b"]);
    }

    #[test]
    fn mixed_dims_and_missing_files_all_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut vids = vec![
            write_video(dir.path(), "a", 5, 3, 5),
            write_video(dir.path(), "b", 5, 3, 5),
            write_video(dir.path(), "c", 5, 4, 5),
        ];
        vids.push(VideoEntry {
            id: "gone".into(),
            features: "gone.vft".into(),
            annotations: Some("gone.json".into()),
        });
        let r = validate_manifest(&manifest(dir.path(), vids));
        assert_eq!(r.videos_checked, 4);
        assert!(r
            .issues
            .iter()
            .any(|i| i.video_ids == vec!["c"] && i.message.contains("mixed")));
        assert_eq!(r.issues.iter().filter(|i| i.video_ids == vec!["gone"]).count(), 2);
    }
}
