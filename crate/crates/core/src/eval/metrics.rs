//! Per-video metrics against multi-annotator ground truth.

use serde::{Deserialize, Serialize};

use crate::datastore::AnnotationSet;
use crate::error::{Error, Result};
use crate::eval::correlation::{kendall_tau_b, spearman_rho};
use crate::eval::knapsack::{knapsack_select, FragmentSelection};

/// How several annotators are combined for rank correlation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankAggregation {
    /// Correlate against each annotator, then average the coefficients.
    #[default]
    PerAnnotatorMean,
    /// Average the annotator rows first, then correlate once.
    MeanAnnotation,
}

/// How per-annotator F1 values are combined within one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Aggregation {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankScores {
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    /// Annotator rows for which τ (resp. ρ) was undefined and skipped.
    pub undefined_tau: usize,
    pub undefined_rho: usize,
}

fn mean_defined(values: &[Option<f64>]) -> (Option<f64>, usize) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let undefined = values.len() - defined.len();
    if defined.is_empty() {
        (None, undefined)
    } else {
        (Some(defined.iter().sum::<f64>() / defined.len() as f64), undefined)
    }
}

/// Kendall's τ-b and Spearman's ρ of `scores` against the annotations.
pub fn evaluate_curve(scores: &[f64], ann: &AnnotationSet, aggregation: RankAggregation) -> Result<RankScores> {
    if scores.len() != ann.num_frames() {
        return Err(Error::usage(format!(
            "video '{}': curve has {} frames, annotations have {}",
            ann.video_id,
            scores.len(),
            ann.num_frames()
        )));
    }
    let rows: Vec<Vec<f64>> = match aggregation {
        RankAggregation::PerAnnotatorMean => ann.user_scores.clone(),
        RankAggregation::MeanAnnotation => vec![ann.mean_scores()],
    };
    let mut taus = Vec::with_capacity(rows.len());
    let mut rhos = Vec::with_capacity(rows.len());
    for row in &rows {
        taus.push(kendall_tau_b(scores, row)?);
        rhos.push(spearman_rho(scores, row)?);
    }
    let (tau, undefined_tau) = mean_defined(&taus);
    let (rho, undefined_rho) = mean_defined(&rhos);
    Ok(RankScores {
        tau,
        rho,
        undefined_tau,
        undefined_rho,
    })
}

/// Mean score inside each half-open fragment.
pub fn fragment_means(scores: &[f64], fragments: &[(usize, usize)]) -> Vec<f64> {
    fragments
        .iter()
        .map(|&(s, e)| scores[s..e].iter().sum::<f64>() / (e - s) as f64)
        .collect()
}

/// Knapsack over fragments by mean score, budget `⌊fraction × num_frames⌋`;
/// returns the selection and its per-frame 0/1 indicator.
pub fn select_keyshots(
    scores: &[f64],
    fragments: &[(usize, usize)],
    budget_fraction: f64,
) -> Result<(FragmentSelection, Vec<bool>)> {
    let n = scores.len();
    let budget = (budget_fraction * n as f64).floor() as usize;
    let lengths: Vec<usize> = fragments.iter().map(|&(s, e)| e - s).collect();
    let sel = knapsack_select(&fragment_means(scores, fragments), &lengths, budget)?;
    let mut summary = vec![false; n];
    for &i in &sel.chosen {
        let (s, e) = fragments[i];
        summary[s..e].iter_mut().for_each(|f| *f = true);
    }
    Ok((sel, summary))
}

/// Frame-overlap F1 (in [0, 1]); 0 when either summary is empty.
pub fn f1_overlap(predicted: &[bool], truth: &[bool]) -> f64 {
    let overlap = predicted.iter().zip(truth).filter(|(&p, &t)| p && t).count() as f64;
    let p_count = predicted.iter().filter(|&&p| p).count() as f64;
    let t_count = truth.iter().filter(|&&t| t).count() as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / p_count;
    let recall = overlap / t_count;
    2.0 * precision * recall / (precision + recall)
}

/// Key-fragment F1 (percent). Returns `Ok(None)` when the annotations carry
/// no change points, since fragments are then undefined.
///
/// Binary annotator rows are used directly as keyshots. Graded rows (e.g.
/// 1–5 importance) are first turned into keyshots by the same knapsack at
/// the same budget, applied to that annotator's scores.
pub fn f1_keyfragment(
    scores: &[f64],
    ann: &AnnotationSet,
    budget_fraction: f64,
    aggregation: F1Aggregation,
) -> Result<Option<f64>> {
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(Error::config(format!(
            "F1 budget fraction must lie in (0, 1], got {budget_fraction}"
        )));
    }
    if scores.len() != ann.num_frames() {
        return Err(Error::usage(format!(
            "video '{}': curve has {} frames, annotations have {}",
            ann.video_id,
            scores.len(),
            ann.num_frames()
        )));
    }
    let Some(fragments) = ann.change_points.as_deref() else {
        return Ok(None);
    };
    let (_, predicted) = select_keyshots(scores, fragments, budget_fraction)?;
    let binary = ann.is_binary();
    let mut per_user = Vec::with_capacity(ann.num_annotators());
    for row in &ann.user_scores {
        let truth = if binary {
            row.iter().map(|&v| v > 0.0).collect()
        } else {
            select_keyshots(row, fragments, budget_fraction)?.1
        };
        per_user.push(f1_overlap(&predicted, &truth));
    }
    let f1 = match aggregation {
        F1Aggregation::Mean => per_user.iter().sum::<f64>() / per_user.len() as f64,
        F1Aggregation::Max => per_user.iter().copied().fold(0.0, f64::max),
    };
    Ok(Some(100.0 * f1))
}
