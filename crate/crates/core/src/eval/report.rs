//! Dataset, split and cross-dataset evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{AnnotationSet, FeatureSequence, SplitSet};
use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate_curve, f1_keyfragment, F1Aggregation, RankAggregation};
use crate::model::Autoencoder;
use crate::score::{csv_error, score_video, ImportanceCurve, ScoringConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub aggregation: RankAggregation,
    pub f1_budget_fraction: f64,
    /// `None` picks per dataset: max for binary keyshot annotations, mean
    /// for graded ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_aggregation: Option<F1Aggregation>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            aggregation: RankAggregation::PerAnnotatorMean,
            f1_budget_fraction: 0.15,
            f1_aggregation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoMetrics {
    pub video_id: String,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetReport {
    pub videos: Vec<VideoMetrics>,
    pub mean_tau: Option<f64>,
    pub mean_rho: Option<f64>,
    pub mean_f1: Option<f64>,
    /// Videos whose τ or ρ was undefined and left out of the mean.
    pub undefined_tau: usize,
    pub undefined_rho: usize,
    pub options: EvalOptions,
    pub f1_aggregation_used: Option<F1Aggregation>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut count, mut missing) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                count += 1;
            }
            None => missing += 1,
        }
    }
    ((count > 0).then(|| sum / count as f64), missing)
}

/// Evaluates the listed videos. Every id needs both a curve and annotations.
pub fn evaluate_videos(
    ids: &[String],
    curves: &BTreeMap<String, ImportanceCurve>,
    anns: &BTreeMap<String, AnnotationSet>,
    opts: &EvalOptions,
) -> Result<DatasetReport> {
    if ids.is_empty() {
        return Err(Error::usage("no videos to evaluate"));
    }
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let c = curves
            .get(id)
            .ok_or_else(|| Error::usage(format!("no importance curve for video '{id}'")))?;
        let a = anns
            .get(id)
            .ok_or_else(|| Error::usage(format!("no annotations for video '{id}'")))?;
        pairs.push((c, a));
    }
    let f1_agg = opts.f1_aggregation.unwrap_or_else(|| {
        if pairs.iter().all(|(_, a)| a.is_binary()) {
            F1Aggregation::Max
        } else {
            F1Aggregation::Mean
        }
    });
    let videos: Vec<VideoMetrics> = pairs
        .par_iter()
        .map(|(c, a)| {
            let r = evaluate_curve(&c.scores, a, opts.aggregation)?;
            Ok(VideoMetrics {
                video_id: a.video_id.clone(),
                tau: r.tau,
                rho: r.rho,
                f1: f1_keyfragment(&c.scores, a, opts.f1_budget_fraction, f1_agg)?,
            })
        })
        .collect::<Result<_>>()?;
    let (mean_tau, undefined_tau) = mean_of(videos.iter().map(|v| v.tau));
    let (mean_rho, undefined_rho) = mean_of(videos.iter().map(|v| v.rho));
    let (mean_f1, _) = mean_of(videos.iter().map(|v| v.f1));
    let any_f1 = videos.iter().any(|v| v.f1.is_some());
    Ok(DatasetReport {
        videos,
        mean_tau,
        mean_rho,
        mean_f1,
        undefined_tau,
        undefined_rho,
        options: opts.clone(),
        f1_aggregation_used: any_f1.then_some(f1_agg),
    })
}

/// Evaluates every annotated video, in id order.
pub fn evaluate_dataset(
    curves: &BTreeMap<String, ImportanceCurve>,
    anns: &BTreeMap<String, AnnotationSet>,
    opts: &EvalOptions,
) -> Result<DatasetReport> {
    let ids: Vec<String> = anns.keys().cloned().collect();
    evaluate_videos(&ids, curves, anns, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub splits: Vec<(String, DatasetReport)>,
    /// Means of the per-split means.
    pub mean_tau: Option<f64>,
    pub mean_rho: Option<f64>,
    pub mean_f1: Option<f64>,
}

pub fn evaluate_splits(
    curves: &BTreeMap<String, ImportanceCurve>,
    anns: &BTreeMap<String, AnnotationSet>,
    splits: &SplitSet,
    opts: &EvalOptions,
) -> Result<SplitReport> {
    if splits.is_empty() {
        return Err(Error::usage("split set is empty"));
    }
    let mut out = Vec::with_capacity(splits.len());
    for s in &splits.splits {
        let r =
            evaluate_videos(&s.test_ids, curves, anns, opts).map_err(|e| Error::usage(format!("{}: {e}", s.name)))?;
        out.push((s.name.clone(), r));
    }
    Ok(SplitReport {
        mean_tau: mean_of(out.iter().map(|(_, r)| r.mean_tau)).0,
        mean_rho: mean_of(out.iter().map(|(_, r)| r.mean_rho)).0,
        mean_f1: mean_of(out.iter().map(|(_, r)| r.mean_f1)).0,
        splits: out,
    })
}

/// An annotated dataset to score, with its own scoring settings.
pub struct EvalDataset {
    pub name: String,
    pub videos: Vec<FeatureSequence>,
    pub annotations: BTreeMap<String, AnnotationSet>,
    pub scoring: ScoringConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossMatrix {
    pub train_tags: Vec<String>,
    pub datasets: Vec<String>,
    /// `cells[model][dataset]`
    pub cells: Vec<Vec<DatasetReport>>,
}

impl CrossMatrix {
    /// CSV with one row per model and a τ and ρ column per dataset.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["train".to_string()];
        for d in &self.datasets {
            header.push(format!("{d}_tau"));
            header.push(format!("{d}_rho"));
        }
        w.write_record(&header).map_err(|e| Error::usage(e.to_string()))?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        for (tag, row) in self.train_tags.iter().zip(&self.cells) {
            let mut rec = vec![tag.clone()];
            for r in row {
                rec.push(fmt(r.mean_tau));
                rec.push(fmt(r.mean_rho));
            }
            w.write_record(&rec).map_err(|e| Error::usage(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Scores every dataset with every model.
pub fn cross_matrix(
    models: &[(String, Autoencoder<f32>)],
    datasets: &[EvalDataset],
    opts: &EvalOptions,
) -> Result<CrossMatrix> {
    let mut cells = Vec::with_capacity(models.len());
    for (tag, model) in models {
        let mut row = Vec::with_capacity(datasets.len());
        for ds in datasets {
            let at = |e: Error| Error::Scoring(format!("model '{tag}' on dataset '{}': {e}", ds.name));
            let mut curves = BTreeMap::new();
            for v in &ds.videos {
                curves.insert(v.video_id.clone(), score_video(model, v, &ds.scoring).map_err(at)?);
            }
            row.push(evaluate_dataset(&curves, &ds.annotations, opts).map_err(at)?);
        }
        cells.push(row);
    }
    Ok(CrossMatrix {
        train_tags: models.iter().map(|(t, _)| t.clone()).collect(),
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        cells,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::usage(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Per-video rows `video_id,tau,rho,f1` (empty cells for undefined values).
pub fn write_video_rows(report: &DatasetReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for v in &report.videos {
        w.serialize(v).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
