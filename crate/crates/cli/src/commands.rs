//! One function per subcommand. Each writes its artifacts plus a frozen
//! copy of the resolved config under `<out_dir>/<command>/` and returns the
//! one-line summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use framemae::datastore::{generate_splits, validate_manifest, DatasetManifest, SplitSet};
use framemae::eval::{
    cross_matrix, evaluate_dataset, evaluate_splits, write_json, write_video_rows, DatasetReport, EvalDataset,
};
use framemae::model::gradcheck::check_model_gradients;
use framemae::model::{load_checkpoint, save_checkpoint, Autoencoder, ModelConfig};
use framemae::numerics::SeedStream;
use framemae::score::{read_curve_dir, score_video, write_curve_csv, ImportanceCurve};
use framemae::train::{train, Corpus, TraceRow, TraceWriter, TrainConfig};
use framemae::Error;
use serde::de::IgnoredAny;
use serde::Serialize;

use crate::config::{GradcheckModel, RunConfig};
use crate::export::export_curve;

/// Maximum relative gradient error accepted by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

/// A check that ran to completion and found problems.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare(run: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = run.out_dir.join(command);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    run.write_frozen(&dir.join("config.toml"))?;
    Ok(dir)
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str, command: &str) -> Result<&'a Path> {
    match value {
        Some(p) => Ok(p),
        None => Err(Error::Usage(format!(
            "{command} needs {key}; set it in the config or with --set {key}=..."
        ))
        .into()),
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

fn run_training(model: &mut Autoencoder<f32>, corpus: &Corpus, cfg: &TrainConfig, dir: &Path) -> Result<Vec<TraceRow>> {
    let trace_path = dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(io(&trace_path))?;
    let mut writer = TraceWriter::new(BufWriter::new(file));
    let mut last_report = 0usize;
    let trace = train(model, corpus, cfg, |row| {
        writer.write(row)?;
        if row.iteration == 0 || row.iteration + 1 >= last_report + 50 {
            last_report = row.iteration + 1;
            eprintln!(
                "iter {:>6}  epoch {:>8.2}  lr {:.3e}  loss {:.5}",
                row.iteration + 1,
                row.epoch,
                row.lr,
                row.loss
            );
        }
        Ok(())
    })?;
    Ok(trace)
}

fn training_summary(command: &str, trace: &[TraceRow], ckpt: &Path) -> String {
    let first = trace.first().map_or(f64::NAN, |r| r.loss);
    let last = trace.last().map_or(f64::NAN, |r| r.loss);
    format!(
        "{command}: {} iterations, loss {first:.5} -> {last:.5}, checkpoint {}",
        trace.len(),
        ckpt.display()
    )
}

pub fn train_cmd(run: &RunConfig) -> Result<String> {
    let manifest_path = required(&run.paths.train_manifest, "paths.train_manifest", "train")?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let corpus = Corpus::from_manifest(&manifest)?;
    if corpus.feature_dim() != run.model.input_dim {
        return Err(Error::Config(format!(
            "dataset '{}' has {}-d features but model.input_dim is {}",
            manifest.name,
            corpus.feature_dim(),
            run.model.input_dim
        ))
        .into());
    }
    let dir = prepare(run, "train")?;
    let mut model = Autoencoder::new(run.model.clone(), &SeedStream::new(run.seed))?;
    let trace = run_training(&mut model, &corpus, &run.train, &dir)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&model, run, &ckpt)?;
    Ok(training_summary("train", &trace, &ckpt))
}

pub fn finetune_cmd(run: &RunConfig) -> Result<String> {
    let ckpt_in = required(&run.paths.checkpoint, "paths.checkpoint", "finetune")?;
    let manifest_path = required(&run.paths.eval_manifest, "paths.eval_manifest", "finetune")?;
    let (mut model, _) = load_checkpoint::<IgnoredAny>(ckpt_in)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let corpus = Corpus::from_manifest(&manifest)?;
    let dir = prepare(run, "finetune")?;
    let trace = run_training(&mut model, &corpus, &run.finetune, &dir)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&model, run, &ckpt)?;
    Ok(training_summary("finetune", &trace, &ckpt))
}

pub fn score_cmd(run: &RunConfig) -> Result<String> {
    let ckpt = required(&run.paths.checkpoint, "paths.checkpoint", "score")?;
    let manifest_path = required(&run.paths.eval_manifest, "paths.eval_manifest", "score")?;
    let (model, _) = load_checkpoint::<IgnoredAny>(ckpt)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    prepare(run, "score")?;
    let out = run.curves_dir();
    fs::create_dir_all(&out).map_err(io(&out))?;
    let mut frames = 0;
    for entry in &manifest.videos {
        let video = framemae::datastore::read_features(&manifest.features_path(entry))?;
        let curve = score_video(&model, &video, &run.scoring)?;
        if !curve.zero_norm_frames.is_empty() {
            eprintln!(
                "warning: video '{}' has {} zero-norm frames (first {}); their scores use the epsilon guard",
                curve.video_id,
                curve.zero_norm_frames.len(),
                curve.zero_norm_frames[0]
            );
        }
        frames += curve.len();
        write_curve_csv(&curve, &out.join(format!("{}.csv", curve.video_id)))?;
    }
    Ok(format!(
        "score: {} videos, {frames} frames, curves in {}",
        manifest.len(),
        out.display()
    ))
}

fn load_curves(dir: &Path) -> Result<BTreeMap<String, ImportanceCurve>> {
    let curves = read_curve_dir(dir).with_context(|| format!("reading curves from {}", dir.display()))?;
    Ok(curves.into_iter().map(|c| (c.video_id.clone(), c)).collect())
}

fn report_line(r: &DatasetReport) -> String {
    let mut s = format!(
        "{} videos, mean tau {}, rho {}",
        r.videos.len(),
        fmt_metric(r.mean_tau),
        fmt_metric(r.mean_rho)
    );
    if r.mean_f1.is_some() {
        s.push_str(&format!(", F1 {}", fmt_metric(r.mean_f1)));
    }
    if r.undefined_tau + r.undefined_rho > 0 {
        s.push_str(&format!(
            " ({} tau, {} rho undefined)",
            r.undefined_tau, r.undefined_rho
        ));
    }
    s
}

pub fn eval_cmd(run: &RunConfig) -> Result<String> {
    let manifest_path = required(&run.paths.eval_manifest, "paths.eval_manifest", "eval")?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let anns = manifest.load_annotations()?;
    let curves = load_curves(&run.curves_dir())?;
    let dir = prepare(run, "eval")?;
    let report = evaluate_dataset(&curves, &anns, &run.eval)?;
    write_json(&report, &dir.join("report.json"))?;
    write_video_rows(&report, &dir.join("videos.csv"))?;
    let mut line = format!("eval: {}", report_line(&report));
    if let Some(split_path) = &run.paths.splits {
        let splits = SplitSet::load(split_path)?;
        let unknown = splits.unknown_ids(&manifest);
        if !unknown.is_empty() {
            return Err(Error::Usage(format!(
                "split file names videos not in the manifest: {}",
                unknown.join(", ")
            ))
            .into());
        }
        let sr = evaluate_splits(&curves, &anns, &splits, &run.eval)?;
        write_json(&sr, &dir.join("splits.json"))?;
        line.push_str(&format!(
            "; {} splits, mean tau {}, rho {}",
            sr.splits.len(),
            fmt_metric(sr.mean_tau),
            fmt_metric(sr.mean_rho)
        ));
    }
    Ok(line)
}

fn model_spec(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((tag, path)) => (tag.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec).to_string();
            (tag, path)
        }
    }
}

pub fn crossval_cmd(run: &RunConfig) -> Result<String> {
    if run.crossval.models.is_empty() || run.crossval.datasets.is_empty() {
        bail!(Error::Usage(
            "crossval needs crossval.models and crossval.datasets".into()
        ));
    }
    let mut models = Vec::new();
    for spec in &run.crossval.models {
        let (tag, path) = model_spec(spec);
        let (model, _) = load_checkpoint::<IgnoredAny>(&path)?;
        models.push((tag, model));
    }
    let mut datasets = Vec::new();
    for path in &run.crossval.datasets {
        let m = DatasetManifest::load(path)?;
        datasets.push(EvalDataset {
            name: m.name.clone(),
            videos: m.load_features()?,
            annotations: m.load_annotations()?,
            scoring: run.scoring.clone(),
        });
    }
    let dir = prepare(run, "crossval")?;
    let matrix = cross_matrix(&models, &datasets, &run.eval)?;
    let csv_path = dir.join("matrix.csv");
    fs::write(&csv_path, matrix.to_csv()?).map_err(io(&csv_path))?;
    write_json(&matrix, &dir.join("matrix.json"))?;
    Ok(format!(
        "crossval: {} models x {} datasets, matrix in {}",
        models.len(),
        datasets.len(),
        csv_path.display()
    ))
}

pub fn splitgen_cmd(run: &RunConfig) -> Result<String> {
    let manifest_path = required(&run.paths.eval_manifest, "paths.eval_manifest", "splitgen")?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let splits = generate_splits(&manifest, run.splits.count, run.splits.test_fraction, run.seed)?;
    let dir = prepare(run, "splitgen")?;
    let path = dir.join("splits.txt");
    splits.save(&path)?;
    Ok(format!(
        "splitgen: {} splits of {} test videos, written to {}",
        splits.len(),
        splits.splits[0].test_ids.len(),
        path.display()
    ))
}

#[derive(Serialize)]
struct GradcheckResult {
    seeds: u64,
    scalars_checked: usize,
    max_relative_error: f64,
    tolerance: f64,
    passed: bool,
}

pub fn gradcheck_cmd(run: &RunConfig) -> Result<String> {
    let g = &run.gradcheck;
    if g.seeds == 0 || !(g.fraction > 0.0 && g.fraction <= 1.0) {
        bail!(Error::Config(
            "gradcheck needs seeds >= 1 and fraction in (0, 1]".into()
        ));
    }
    let config = match g.model {
        GradcheckModel::Tiny => ModelConfig::tiny(),
        GradcheckModel::Configured => run.model.clone(),
    };
    let dir = prepare(run, "gradcheck")?;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for i in 0..g.seeds {
        let s = check_model_gradients(&config, run.seed + i, g.mask_ratio, g.fraction)?;
        checked += s.checked;
        if s.max_relative_error > worst || s.max_relative_error.is_nan() {
            worst = s.max_relative_error;
        }
    }
    let passed = worst < GRADCHECK_TOLERANCE;
    write_json(
        &GradcheckResult {
            seeds: g.seeds,
            scalars_checked: checked,
            max_relative_error: worst,
            tolerance: GRADCHECK_TOLERANCE,
            passed,
        },
        &dir.join("result.json"),
    )?;
    let line = format!(
        "gradcheck: max relative error {worst:.3e} over {} seeds, {checked} scalars (tolerance {GRADCHECK_TOLERANCE:e})",
        g.seeds
    );
    if passed {
        Ok(line)
    } else {
        Err(CheckFailed(line).into())
    }
}

pub fn export_curves_cmd(run: &RunConfig) -> Result<String> {
    let manifest_path = required(&run.paths.eval_manifest, "paths.eval_manifest", "export-curves")?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let anns = manifest.load_annotations()?;
    let curves = load_curves(&run.curves_dir())?;
    let dir = prepare(run, "export-curves")?;
    let mut written = 0;
    for (id, ann) in &anns {
        let curve = curves
            .get(id)
            .ok_or_else(|| Error::Usage(format!("no importance curve for video '{id}'")))?;
        export_curve(curve, ann, &dir)?;
        written += 1;
    }
    Ok(format!("export-curves: {written} videos written to {}", dir.display()))
}

pub fn validate_cmd(run: &RunConfig) -> Result<String> {
    let mut manifests: Vec<&Path> = Vec::new();
    manifests.extend(run.paths.train_manifest.as_deref());
    manifests.extend(run.paths.eval_manifest.as_deref());
    manifests.extend(run.crossval.datasets.iter().map(PathBuf::as_path));
    if manifests.is_empty() {
        bail!(Error::Usage(
            "validate needs at least one of paths.train_manifest, paths.eval_manifest, crossval.datasets".into()
        ));
    }
    let (mut videos, mut problems) = (0, 0);
    for path in manifests {
        let m = DatasetManifest::load(path)?;
        let report = validate_manifest(&m);
        videos += report.videos_checked;
        for issue in &report.issues {
            problems += 1;
            eprintln!("{}: [{}] {}", path.display(), issue.video_ids.join(", "), issue.message);
        }
    }
    let line = format!("validate: {videos} videos checked, {problems} issues");
    if problems == 0 {
        Ok(line)
    } else {
        Err(CheckFailed(line).into())
    }
}
