//! Run configuration: one TOML file plus `--set key=value` overrides.
//!
//! Every run starts from [`RunConfig::default`]. The file and then the
//! overrides are merged over it key by key, so a partial `[finetune]` table
//! keeps the fine-tuning defaults for the keys it omits.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use framemae::eval::EvalOptions;
use framemae::model::ModelConfig;
use framemae::score::ScoringConfig;
use framemae::train::TrainConfig;
use framemae::Error;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitOptions {
    pub count: usize,
    pub test_fraction: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            count: 5,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradcheckModel {
    /// The six-frame, 8-d test architecture.
    Tiny,
    /// The `[model]` table of this config.
    Configured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckOptions {
    pub model: GradcheckModel,
    pub seeds: u64,
    pub fraction: f64,
    pub mask_ratio: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            model: GradcheckModel::Tiny,
            seeds: 20,
            fraction: 1.0,
            mask_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalOptions {
    /// Checkpoints as `tag=path`, or a bare path tagged by its file stem.
    pub models: Vec<String>,
    /// Annotated dataset manifests.
    pub datasets: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub scoring: ScoringConfig,
    pub eval: EvalOptions,
    pub splits: SplitOptions,
    pub gradcheck: GradcheckOptions,
    pub paths: Paths,
    pub crossval: CrossvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune: TrainConfig::finetune(),
            scoring: ScoringConfig::default(),
            eval: EvalOptions::default(),
            splits: SplitOptions::default(),
            gradcheck: GradcheckOptions::default(),
            paths: Paths::default(),
            crossval: CrossvalOptions::default(),
        }
    }
}

/// Keys that are unset by default, with what they mean.
const OPTIONAL_KEYS: &[(&str, &str)] = &[
    ("scoring.target_slot", "clip_len / 2"),
    ("eval.f1_aggregation", "max for binary keyshots, mean otherwise"),
    ("paths.train_manifest", "required by train"),
    (
        "paths.eval_manifest",
        "required by finetune, score, eval, splitgen, export-curves",
    ),
    ("paths.checkpoint", "required by finetune and score"),
    ("paths.curves_dir", "<out_dir>/curves"),
    ("paths.splits", "evaluate the whole dataset"),
];

/// Per-table seeds are driven by the top-level `seed`.
const DERIVED_KEYS: &[(&str, &str)] = &[("train", "seed"), ("finetune", "seed")];

impl RunConfig {
    /// The configuration as a TOML tree, without the derived seed keys.
    pub fn to_value(&self) -> Value {
        let mut v = Value::try_from(self).expect("run config serializes to TOML");
        let root = v.as_table_mut().expect("run config is a table");
        for (table, key) in DERIVED_KEYS {
            if let Some(Value::Table(t)) = root.get_mut(*table) {
                t.remove(*key);
            }
        }
        v
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.to_value()).expect("run config serializes to TOML")
    }

    pub fn write_frozen(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_toml()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn curves_dir(&self) -> PathBuf {
        self.paths
            .curves_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("curves"))
    }
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Every configuration key with its default, in table order; optional keys
/// carry a description instead of a value.
pub fn key_catalog() -> Vec<(String, String)> {
    let mut leaves = Vec::new();
    flatten("", RunConfig::default().to_value().as_table().unwrap(), &mut leaves);
    let mut out: Vec<(String, String)> = leaves.into_iter().map(|(k, v)| (k, v.to_string())).collect();
    for (key, what) in OPTIONAL_KEYS {
        let table = key.split('.').next().unwrap();
        let at = out
            .iter()
            .rposition(|(k, _)| k.starts_with(&format!("{table}.")))
            .map_or(out.len(), |i| i + 1);
        out.insert(at, (key.to_string(), format!("unset ({what})")));
    }
    out
}

pub fn help_text() -> String {
    let catalog = key_catalog();
    let width = catalog.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (set in the --config file or with --set key=value):\n");
    for (k, v) in &catalog {
        s.push_str(&format!("  {k:width$}  {v}\n"));
    }
    s
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `key=value`. The value is read as a TOML literal when it is one
/// and as a bare string otherwise, so `train.stride=rand(1,8)` works.
pub fn parse_override(arg: &str) -> Result<(String, Value), Error> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override '{arg}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Usage(format!("override '{arg}' has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn insert_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), Error> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap();
    let mut t = table;
    for (i, p) in parts.iter().enumerate() {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{}' is not a table", parts[..=i].join("."))))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn unknown_keys(user: &Table) -> Vec<String> {
    let known: BTreeSet<String> = key_catalog().into_iter().map(|(k, _)| k).collect();
    let mut leaves = Vec::new();
    flatten("", user, &mut leaves);
    leaves
        .into_iter()
        .map(|(k, _)| k)
        // A leaf that names a table is a type error; serde reports those.
        .filter(|k| !known.contains(k) && !known.iter().any(|c| c.starts_with(&format!("{k}."))))
        .collect()
}

/// Resolves the configuration from an optional file and overrides; later
/// overrides win.
pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, Error> {
    let mut user = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            toml::from_str::<Table>(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset: e.span().map_or(0, |s| s.start) as u64,
                reason: e.message().to_string(),
            })?
        }
        None => Table::new(),
    };
    for o in overrides {
        let (k, v) = parse_override(o)?;
        insert_dotted(&mut user, &k, v)?;
    }
    let unknown = unknown_keys(&user);
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown configuration keys: {} (see --help for the full list)",
            unknown.join(", ")
        )));
    }
    let mut tree = RunConfig::default().to_value().as_table().unwrap().clone();
    merge(&mut tree, user);
    let seed = tree.get("seed").cloned().unwrap_or(Value::Integer(0));
    for (table, key) in DERIVED_KEYS {
        if let Some(Value::Table(t)) = tree.get_mut(*table) {
            t.insert(key.to_string(), seed.clone());
        }
    }
    let run: RunConfig = Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    run.model.validate()?;
    run.train.validate()?;
    run.finetune.validate()?;
    run.scoring.validate()?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use framemae::train::{StridePolicy, TrainMode};

    #[test]
    fn defaults_resolve_without_input() {
        let run = resolve(None, &[]).unwrap();
        assert_eq!(run, RunConfig::default());
        assert_eq!(run.model.clip_len, 30);
        assert_eq!(run.train.batch_size, 128);
        assert_eq!(run.scoring.stride, 2);
        assert_eq!(run.train.stride, StridePolicy::UniformRandom { lo: 1, hi: 8 });
    }

    #[test]
    fn overrides_win_and_parse_types() {
        let run = resolve(
            None,
            &[
                "train.base_lr=1e-3".into(),
                "train.stride=rand(1,4)".into(),
                "finetune.samples=50000".into(),
                "seed=9".into(),
                "paths.checkpoint=model.ckpt".into(),
            ],
        )
        .unwrap();
        assert_eq!(run.train.base_lr, 1e-3);
        assert_eq!(run.train.stride, StridePolicy::UniformRandom { lo: 1, hi: 4 });
        assert_eq!(run.finetune.samples, 50_000);
        assert_eq!(run.finetune.mode, TrainMode::Samples);
        assert_eq!(run.finetune.warmup_epochs, 5.0);
        assert_eq!((run.train.seed, run.finetune.seed), (9, 9));
        assert_eq!(run.paths.checkpoint, Some(PathBuf::from("model.ckpt")));
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = resolve(
            None,
            &["train.epoch=3".into(), "modle.clip_len=4".into(), "train.seed=1".into()],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        for k in ["train.epoch", "modle.clip_len", "train.seed"] {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 4\n[train]\nepochs = 7\nbatch_size = 16\n").unwrap();
        let run = resolve(Some(&path), &["train.epochs=9".into()]).unwrap();
        assert_eq!((run.seed, run.train.epochs, run.train.batch_size), (4, 9, 16));
    }

    #[test]
    fn bad_toml_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 1\n[train\n").unwrap();
        match resolve(Some(&path), &[]).unwrap_err() {
            Error::Format { offset, .. } => assert!(offset >= 9, "{offset}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(
            resolve(None, &["train.mask_ratio=1.5".into()]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            resolve(None, &["train.batch_size=\"x\"".into()]),
            Err(Error::Config(_))
        ));
        assert!(matches!(resolve(None, &["train=3".into()]), Err(Error::Config(_))));
    }

    #[test]
    fn frozen_config_round_trips() {
        let run = resolve(
            None,
            &[
                "seed=3".into(),
                "scoring.target_slot=4".into(),
                "train.min_lr=1e-7".into(),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frozen.toml");
        run.write_frozen(&path).unwrap();
        assert_eq!(resolve(Some(&path), &[]).unwrap(), run);
    }

    #[test]
    fn catalog_lists_every_key() {
        let help = help_text();
        for k in [
            "seed",
            "out_dir",
            "model.clip_len",
            "train.optimizer.weight_decay",
            "finetune.warmup_epochs",
            "scoring.target_slot",
            "eval.f1_budget_fraction",
            "paths.checkpoint",
            "crossval.models",
        ] {
            assert!(help.contains(&format!("  {k} ")), "{k} missing from\n{help}");
        }
        assert!(!help.contains("train.seed"));
    }
}
