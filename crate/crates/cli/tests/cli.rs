use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use framemae::datastore::{write_annotations, write_features, DatasetManifest, Role, VideoEntry};
use framemae::numerics::SeedStream;
use framemae::synthetic::{graded_annotations, synthetic_corpus, SyntheticSpec};

fn framemae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framemae"))
        .current_dir(dir)
        .env("FRAMEMAE_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small annotated synthetic dataset and returns its manifest path.
fn dataset(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let spec = SyntheticSpec {
        videos: 6,
        min_frames: 60,
        max_frames: 90,
        seed,
        ..SyntheticSpec::default()
    };
    let data = dir.join(name);
    fs::create_dir_all(&data).unwrap();
    let mut rng = SeedStream::new(seed).rng("annotations", 0);
    let mut videos = Vec::new();
    for v in synthetic_corpus(&spec).unwrap() {
        let id = v.features.video_id.clone();
        write_features(&v.features, &data.join(format!("{id}.vft"))).unwrap();
        let ann = graded_annotations(&id, v.features.num_frames(), 5, 10, &mut rng);
        write_annotations(&ann, &data.join(format!("{id}.json"))).unwrap();
        videos.push(VideoEntry {
            id: id.clone(),
            features: format!("{id}.vft").into(),
            annotations: Some(format!("{id}.json").into()),
        });
    }
    let manifest = DatasetManifest {
        name: name.into(),
        roles: vec![Role::Train, Role::Eval],
        long_videos: true,
        videos,
        base_dir: data.clone(),
    };
    let path = data.join("manifest.toml");
    manifest.save(&path).unwrap();
    path
}

const TINY: &str = r#"
seed = 7
out_dir = "out"

[model]
clip_len = 6
input_dim = 8
enc_depth = 1
enc_heads = 2
enc_dim = 8
dec_depth = 1
dec_heads = 2
dec_dim = 4

[train]
epochs = 20
batch_size = 16
base_lr = 1e-2
warmup_epochs = 2.0
stride = "rand(1,2)"

[finetune]
samples = 64
batch_size = 16
warmup_epochs = 0.25

[scoring]
clip_len = 6

[gradcheck]
seeds = 2
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), "synth_a", 1);
    let cfg = format!(
        "{TINY}\n[paths]\ntrain_manifest = \"{m}\"\neval_manifest = \"{m}\"\n",
        m = manifest.display()
    );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    (dir, manifest)
}

#[test]
fn full_pipeline() {
    let (dir, manifest) = setup();
    let d = dir.path();

    let o = framemae(d, &["train", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("train: "), "{}", stdout(&o));
    let ckpt = d.join("out/train/model.ckpt");
    assert!(ckpt.exists());
    let trace = fs::read_to_string(d.join("out/train/trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,epoch,lr,loss\n"));
    assert!(d.join("out/train/config.toml").exists());

    let set_ckpt = format!("paths.checkpoint={}", ckpt.display());
    let o = framemae(d, &["score", "-c", "run.toml", "--set", &set_ckpt]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curves: Vec<_> = fs::read_dir(d.join("out/curves")).unwrap().collect();
    assert_eq!(curves.len(), 6);

    let o = framemae(d, &["eval", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("mean tau") && line.contains("F1"), "{line}");
    let rows = fs::read_to_string(d.join("out/eval/videos.csv")).unwrap();
    assert!(rows.starts_with("video_id,tau,rho,f1\n"));
    assert_eq!(rows.lines().count(), 7);

    let o = framemae(
        d,
        &[
            "splitgen",
            "-c",
            "run.toml",
            "--set",
            "splits.count=3",
            "--set",
            "splits.test_fraction=0.5",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let splits = d.join("out/splitgen/splits.txt");
    let set_splits = format!("paths.splits={}", splits.display());
    let o = framemae(d, &["eval", "-c", "run.toml", "--set", &set_splits]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 splits"), "{}", stdout(&o));
    assert!(d.join("out/eval/splits.json").exists());

    let o = framemae(d, &["export-curves", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plot = fs::read_to_string(d.join("out/export-curves/synth_000.csv")).unwrap();
    assert!(plot.starts_with("frame,ground_truth,prediction\n"));

    let o = framemae(d, &["finetune", "-c", "run.toml", "--set", &set_ckpt]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("4 iterations"), "{}", stdout(&o));

    let second = dataset(d, "synth_b", 2);
    let models = format!(
        "crossval.models=[\"a={}\", \"{}\"]",
        ckpt.display(),
        d.join("out/finetune/model.ckpt").display()
    );
    let datasets = format!(
        "crossval.datasets=[\"{}\", \"{}\"]",
        manifest.display(),
        second.display()
    );
    let o = framemae(d, &["crossval", "-c", "run.toml", "--set", &models, "--set", &datasets]);
    assert!(o.status.success(), "{}", stderr(&o));
    let matrix = fs::read_to_string(d.join("out/crossval/matrix.csv")).unwrap();
    let mut lines = matrix.lines();
    assert_eq!(
        lines.next().unwrap(),
        "train,synth_a_tau,synth_a_rho,synth_b_tau,synth_b_rho"
    );
    assert!(lines.next().unwrap().starts_with("a,"));
    assert!(lines.next().unwrap().starts_with("model,"));
}

#[test]
fn frozen_config_reproduces_checkpoint() {
    let (dir, _) = setup();
    let d = dir.path();
    assert!(framemae(d, &["train", "-c", "run.toml"]).status.success());
    let first = fs::read(d.join("out/train/model.ckpt")).unwrap();
    let rerun = d.join("rerun");
    fs::create_dir_all(&rerun).unwrap();
    fs::copy(d.join("out/train/config.toml"), rerun.join("frozen.toml")).unwrap();
    let o = framemae(&rerun, &["train", "-c", "frozen.toml", "--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, fs::read(rerun.join("out/train/model.ckpt")).unwrap());
}

#[test]
fn gradcheck_and_validate() {
    let (dir, manifest) = setup();
    let d = dir.path();
    let o = framemae(d, &["gradcheck", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("max relative error"));

    let o = framemae(d, &["validate", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 issues"));

    // Truncate one feature file: validate reports it and fails with the check exit code.
    let vft = manifest.parent().unwrap().join("synth_002.vft");
    let bytes = fs::read(&vft).unwrap();
    fs::write(&vft, &bytes[..bytes.len() - 8]).unwrap();
    let o = framemae(d, &["validate", "-c", "run.toml"]);
    assert_eq!(o.status.code(), Some(10));
    assert!(stderr(&o).contains("synth_002"), "{}", stderr(&o));
}

#[test]
fn config_errors_have_their_own_exit_codes() {
    let (dir, _) = setup();
    let d = dir.path();
    let o = framemae(
        d,
        &[
            "train",
            "-c",
            "run.toml",
            "--set",
            "train.epoch=3",
            "--set",
            "scoring.strid=2",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("train.epoch") && err.contains("scoring.strid"), "{err}");

    let o = framemae(d, &["score", "-c", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paths.checkpoint"));

    fs::write(d.join("broken.toml"), "seed = [\n").unwrap();
    assert_eq!(framemae(d, &["train", "-c", "broken.toml"]).status.code(), Some(4));

    assert_eq!(framemae(d, &["train", "-c", "missing.toml"]).status.code(), Some(5));

    let o = framemae(d, &["train", "-c", "run.toml", "--set", "model.input_dim=16"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn help_lists_keys_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = framemae(dir.path(), &["--help"]);
    assert!(o.status.success());
    let help = stdout(&o);
    for line in [
        "model.clip_len                   30",
        "train.base_lr                    0.0004",
        "scoring.stride                   2",
    ] {
        assert!(help.contains(line), "{line} not in\n{help}");
    }
    for cmd in [
        "train",
        "finetune",
        "score",
        "eval",
        "crossval",
        "splitgen",
        "gradcheck",
        "export-curves",
        "validate",
    ] {
        assert!(help.contains(&format!("  {cmd} ")), "{cmd}");
    }
}
