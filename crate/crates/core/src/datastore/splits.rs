//! Random evaluation splits and their text layout:
//!
//! ```text
//! Split 1:
//!   video_35
//!   video_23
//! Split 2:
//!   video_8
//! ```
//!
//! Each split lists the test videos; the rest of the dataset is implicit.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use serde::Serialize;

use crate::datastore::manifest::DatasetManifest;
use crate::error::{Error, Result};
use crate::numerics::SeedStream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub name: String,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitSet {
    pub splits: Vec<Split>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// One split holding every id, in the given order.
    pub fn whole(ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        SplitSet {
            splits: vec![Split {
                name: "Split 1".into(),
                test_ids: ids.into_iter().map(Into::into).collect(),
            }],
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.splits {
            out.push_str(&s.name);
            out.push_str(":\n");
            for id in &s.test_ids {
                out.push_str("  ");
                out.push_str(id);
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut set = SplitSet::default();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() {
                // blank lines are allowed anywhere
            } else if !body.starts_with(char::is_whitespace) {
                let name = body
                    .strip_suffix(':')
                    .ok_or_else(|| Error::format(path, offset, format!("expected 'Split N:' header, got '{body}'")))?;
                set.splits.push(Split {
                    name: name.trim().to_string(),
                    test_ids: Vec::new(),
                });
            } else {
                let split = set
                    .splits
                    .last_mut()
                    .ok_or_else(|| Error::format(path, offset, "video id before any split header"))?;
                split.test_ids.push(body.trim().to_string());
            }
            offset += line.len() as u64;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Ids named by a split but absent from the manifest.
    pub fn unknown_ids<'a>(&'a self, manifest: &DatasetManifest) -> Vec<&'a str> {
        self.splits
            .iter()
            .flat_map(|s| s.test_ids.iter())
            .filter(|id| manifest.entry(id).is_none())
            .map(String::as_str)
            .collect()
    }
}

/// Draws `num_splits` independent test sets of `round(test_fraction × N)`
/// videos each, without replacement inside a split.
pub fn generate_splits(
    manifest: &DatasetManifest,
    num_splits: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitSet> {
    if manifest.is_empty() {
        return Err(Error::usage(format!("manifest '{}' has no videos", manifest.name)));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::usage(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if num_splits == 0 {
        return Err(Error::usage("number of splits must be at least 1"));
    }
    let ids: Vec<&str> = manifest.ids().collect();
    let n = ids.len();
    let k = ((test_fraction * n as f64).round() as usize).clamp(1, n);
    let seeds = SeedStream::new(seed);
    let splits = (0..num_splits)
        .map(|s| {
            let mut rng = seeds.rng("splits", s as u64);
            Split {
                name: format!("Split {}", s + 1),
                test_ids: sample(&mut rng, n, k).into_iter().map(|i| ids[i].to_string()).collect(),
            }
        })
        .collect();
    Ok(SplitSet { splits })
}
