//! Plot-ready CSVs pairing mean ground truth with a predicted curve.

use std::path::{Path, PathBuf};

use framemae::datastore::AnnotationSet;
use framemae::score::ImportanceCurve;
use framemae::Error;

/// Min-max scales to [0, 1]; a constant series maps to all zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: e.position().map_or(0, |p| p.byte()),
        reason: e.to_string(),
    }
}

/// Writes `<out_dir>/<video_id>.csv` with columns
/// `frame,ground_truth,prediction`, each series min-max scaled.
pub fn export_curve(curve: &ImportanceCurve, ann: &AnnotationSet, out_dir: &Path) -> Result<PathBuf, Error> {
    if curve.len() != ann.num_frames() {
        return Err(Error::Usage(format!(
            "video '{}': curve has {} frames, annotations have {}",
            curve.video_id,
            curve.len(),
            ann.num_frames()
        )));
    }
    let truth = min_max(&ann.mean_scores());
    let pred = min_max(&curve.scores);
    let path = out_dir.join(format!("{}.csv", curve.video_id));
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["frame", "ground_truth", "prediction"])
        .map_err(|e| csv_err(&path, e))?;
    for (i, (t, p)) in truth.iter().zip(&pred).enumerate() {
        w.write_record([i.to_string(), t.to_string(), p.to_string()])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
