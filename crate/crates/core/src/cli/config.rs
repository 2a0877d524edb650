//! JSON run configuration for `train`, `cv` and `ablate`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::AblationSpec;
use crate::train::{TrainConfig, VALIDATION_RATIO};

/// Full run description. Every field has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    /// Cohort manifest; relative paths resolve against the config file.
    pub manifest: PathBuf,
    /// Category map; defaults to `categories.json` beside the manifest.
    pub categories: Option<PathBuf>,
    /// Parent directory for run directories.
    pub run_root: PathBuf,
    /// Monte Carlo folds for `cv` and `ablate`.
    pub folds: usize,
    pub validation_ratio: f64,
    pub ablation: AblationSpec,
    pub train: TrainConfig,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        RunConfigFile {
            manifest: PathBuf::from("data/manifest.csv"),
            categories: None,
            run_root: PathBuf::from("runs"),
            folds: 5,
            validation_ratio: VALIDATION_RATIO,
            ablation: AblationSpec::full(),
            train: TrainConfig::default(),
        }
    }
}

/// Dotted paths of keys in `given` that `known` lacks.
fn unknown_keys(given: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(g), Value::Object(k)) = (given, known) else { return };
    for (key, v) in g {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            None => out.push(path),
            Some(kv) => unknown_keys(v, kv, &path, out),
        }
    }
}

impl RunConfigFile {
    /// Parses, rejects unknown keys (all of them are listed), range-checks
    /// and resolves relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let known = serde_json::to_value(RunConfigFile::default()).expect("default config serialises");
        let mut extra = Vec::new();
        unknown_keys(&value, &known, "", &mut extra);
        if !extra.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", extra.join(", "))));
        }
        let mut cfg: RunConfigFile =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("schema violation: {e}")))?;
        cfg.validate()?;
        for p in [Some(&mut cfg.manifest), cfg.categories.as_mut(), Some(&mut cfg.run_root)].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.folds == 0 {
            bad.push("folds must be >= 1".to_string());
        }
        if !(self.validation_ratio > 0.0 && self.validation_ratio < 1.0) {
            bad.push(format!("validation_ratio = {} outside (0, 1)", self.validation_ratio));
        }
        if let Err(Error::Config(msg)) = self.train.validate() {
            bad.push(format!("train: {msg}"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn category_path(&self) -> PathBuf {
        self.categories.clone().unwrap_or_else(|| crate::dataio::default_category_path(&self.manifest))
    }
}
