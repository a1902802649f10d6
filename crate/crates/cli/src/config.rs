//! Pipeline configuration: one TOML file, flag overrides, validation, and
//! the semantic hash that ties every artifact back to the run that made it.
//!
//! Precedence is defaults < config file < command-line flags. The hash
//! covers exactly the fields that change results — output location and
//! worker count are excluded, so re-running the same analysis elsewhere or
//! with different parallelism reproduces identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aqicast_core::dataset::{Band, BandMap, Task};
use aqicast_core::ingest::FEATURE_NAMES;
use aqicast_core::models::{zoo, Family, Hyper, HyperValue, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::CliError;

/// Which supervised task(s) a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSelection {
    Regression,
    Classification,
    Both,
}

impl TaskSelection {
    pub fn parse(text: &str) -> Result<TaskSelection, CliError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "regression" => Ok(TaskSelection::Regression),
            "classification" => Ok(TaskSelection::Classification),
            "both" => Ok(TaskSelection::Both),
            other => Err(CliError::Usage(format!(
                "unknown task {other:?}; expected regression, classification, or both"
            ))),
        }
    }

    /// The tasks to run, in fixed emission order.
    pub fn tasks(self) -> Vec<Task> {
        match self {
            TaskSelection::Regression => vec![Task::Regression],
            TaskSelection::Classification => vec![Task::Classification],
            TaskSelection::Both => vec![Task::Regression, Task::Classification],
        }
    }
}

/// Stage seeds, all defaulting to the global seed unless set explicitly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Seeds {
    pub global: u64,
    pub kmeans: u64,
    pub folds: u64,
    pub models: u64,
    pub explain: u64,
}

/// One hyperparameter override from the `[hyper.<family>]` config tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum HyperOverride {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl HyperOverride {
    fn from_toml(family: &str, key: &str, value: &toml::Value) -> Result<HyperOverride, CliError> {
        Ok(match value {
            toml::Value::Integer(v) => HyperOverride::Int(*v),
            toml::Value::Float(v) => HyperOverride::Float(*v),
            toml::Value::Boolean(v) => HyperOverride::Bool(*v),
            toml::Value::String(v) => HyperOverride::Text(v.clone()),
            other => {
                return Err(CliError::Usage(format!(
                    "hyper.{family}.{key} must be a number, boolean, or string, not {}",
                    other.type_str()
                )))
            }
        })
    }

    fn to_value(&self) -> HyperValue {
        match self {
            HyperOverride::Int(v) => HyperValue::Int(*v),
            HyperOverride::Float(v) => HyperValue::Float(*v),
            HyperOverride::Bool(v) => HyperValue::Bool(*v),
            HyperOverride::Text(v) => HyperValue::Text(v.clone()),
        }
    }
}

/// The raw config file; every key optional so flags and defaults can fill
/// the gaps. Unknown keys are rejected to catch typos.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    task: Option<String>,
    country: Option<String>,
    exclude_features: Option<Vec<String>>,
    bands: Option<String>,
    kfold_k: Option<usize>,
    time_blocked_cv: Option<bool>,
    nrmse_threshold: Option<f64>,
    workers: Option<usize>,
    seed: Option<u64>,
    seed_kmeans: Option<u64>,
    seed_folds: Option<u64>,
    seed_models: Option<u64>,
    seed_explain: Option<u64>,
    explain_repeats: Option<usize>,
    lime_samples: Option<usize>,
    pdp_grid: Option<usize>,
    pdp_features: Option<Vec<String>>,
    hyper: Option<BTreeMap<String, BTreeMap<String, toml::Value>>>,
}

/// Command-line values that override the config file.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: Option<String>,
    pub country: Option<String>,
    pub exclude_features: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// A fully resolved, validated run configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub task: TaskSelection,
    pub country: Option<String>,
    /// Sorted and deduplicated; every name is one of the 19 features.
    pub exclude_features: Vec<String>,
    pub bands: BandMap,
    pub kfold_k: usize,
    pub time_blocked_cv: bool,
    pub nrmse_threshold: f64,
    /// 0 leaves the thread-pool size to the library default.
    pub workers: usize,
    pub seeds: Seeds,
    pub explain_repeats: usize,
    pub lime_samples: usize,
    pub pdp_grid: usize,
    /// Explicit partial-dependence features; empty means the top three by
    /// permutation importance.
    pub pdp_features: Vec<String>,
    /// family id -> hyperparameter -> override.
    pub hyper: BTreeMap<String, BTreeMap<String, HyperOverride>>,
}

/// The hashed view of a config: exactly the fields that influence results.
/// `out` and `workers` are deliberately absent.
#[derive(Serialize)]
struct SemanticView<'a> {
    input: String,
    tasks: TaskSelection,
    country: &'a Option<String>,
    exclude_features: &'a [String],
    bands: &'a [Band],
    kfold_k: usize,
    time_blocked_cv: bool,
    nrmse_threshold: f64,
    seeds: Seeds,
    explain_repeats: usize,
    lime_samples: usize,
    pdp_grid: usize,
    pdp_features: &'a [String],
    hyper: &'a BTreeMap<String, BTreeMap<String, HyperOverride>>,
}

/// The narrower view behind cross-command freshness checks: only the fields
/// that shape the shared artifact chain (cleaned table, datasets, fitted
/// models, leaderboard). Per-command fields — the focus country, the
/// explanation knobs, the task subset — are absent, so `project --country X`
/// composes with artifacts from a plain `evaluate` instead of declaring
/// them stale.
#[derive(Serialize)]
struct PipelineView<'a> {
    input: String,
    exclude_features: &'a [String],
    bands: &'a [Band],
    kfold_k: usize,
    time_blocked_cv: bool,
    nrmse_threshold: f64,
    seed_folds: u64,
    seed_models: u64,
    hyper: &'a BTreeMap<String, BTreeMap<String, HyperOverride>>,
}

fn sha256_json<T: Serialize>(view: &T) -> String {
    let bytes = serde_json::to_vec(view).expect("hash view serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

impl PipelineConfig {
    /// Loads the config file (when given), applies flag overrides, fills
    /// defaults, and validates the result.
    pub fn resolve(path: Option<&Path>, flags: &FlagOverrides) -> Result<PipelineConfig, CliError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<ConfigFile>(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };

        let input =
            flags.input.clone().or(file.input).ok_or_else(|| {
                CliError::Usage("no input CSV; pass --input or set `input`".into())
            })?;
        let tasks = TaskSelection::parse(
            flags
                .task
                .as_deref()
                .or(file.task.as_deref())
                .unwrap_or("both"),
        )?;

        let mut exclude_features = if flags.exclude_features.is_empty() {
            file.exclude_features.unwrap_or_default()
        } else {
            flags.exclude_features.clone()
        };
        exclude_features.sort();
        exclude_features.dedup();
        for name in &exclude_features {
            if !FEATURE_NAMES.contains(&name.as_str()) {
                return Err(CliError::Usage(format!(
                    "cannot exclude unknown feature {name:?}; valid names are the 19 model features"
                )));
            }
        }

        let bands = match &file.bands {
            Some(text) => BandMap::parse(text)?,
            None => BandMap::default_daqi(),
        };

        let seed = flags.seed.or(file.seed).unwrap_or(42);
        let seeds = Seeds {
            global: seed,
            kmeans: file.seed_kmeans.unwrap_or(seed),
            folds: file.seed_folds.unwrap_or(seed),
            models: file.seed_models.unwrap_or(seed),
            explain: file.seed_explain.unwrap_or(seed),
        };

        let mut hyper = BTreeMap::new();
        for (family_name, table) in file.hyper.unwrap_or_default() {
            let family = Family::parse(&family_name).ok_or_else(|| {
                CliError::Usage(format!("unknown model family in [hyper.{family_name}]"))
            })?;
            let mut entries = BTreeMap::new();
            let mut probe = Hyper::defaults(family);
            for (key, raw) in table {
                let value = HyperOverride::from_toml(&family_name, &key, &raw)?;
                // Dry-apply so typos and bad values fail at load time.
                probe.set(family, &key, &value.to_value())?;
                entries.insert(key, value);
            }
            hyper.insert(family.id().to_string(), entries);
        }

        let config = PipelineConfig {
            input,
            out: flags
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            task: tasks,
            country: flags.country.clone().or(file.country),
            exclude_features,
            bands,
            kfold_k: file.kfold_k.unwrap_or(5),
            time_blocked_cv: file.time_blocked_cv.unwrap_or(false),
            nrmse_threshold: file.nrmse_threshold.unwrap_or(0.10),
            workers: flags.workers.or(file.workers).unwrap_or(0),
            seeds,
            explain_repeats: file.explain_repeats.unwrap_or(5),
            lime_samples: file.lime_samples.unwrap_or(5000),
            pdp_grid: file.pdp_grid.unwrap_or(20),
            pdp_features: file.pdp_features.unwrap_or_default(),
            hyper,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.kfold_k < 2 {
            return Err(CliError::Usage(format!(
                "kfold_k must be at least 2, got {}",
                self.kfold_k
            )));
        }
        // Rejects zero, negative, and NaN alike.
        if self.nrmse_threshold.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(CliError::Usage(format!(
                "nrmse_threshold must be positive, got {}",
                self.nrmse_threshold
            )));
        }
        if self.explain_repeats < 1 {
            return Err(CliError::Usage("explain_repeats must be at least 1".into()));
        }
        if self.lime_samples < 2 {
            return Err(CliError::Usage("lime_samples must be at least 2".into()));
        }
        if self.pdp_grid < 2 {
            return Err(CliError::Usage("pdp_grid must be at least 2".into()));
        }
        for name in &self.pdp_features {
            let known = FEATURE_NAMES.contains(&name.as_str())
                || name == aqicast_core::dataset::CATEGORIES_FEATURE;
            if !known {
                return Err(CliError::Usage(format!(
                    "unknown pdp feature {name:?}; valid names are the model features"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical serialization of the semantic fields.
    pub fn hash(&self) -> String {
        sha256_json(&SemanticView {
            input: self.input.to_string_lossy().into_owned(),
            tasks: self.task,
            country: &self.country,
            exclude_features: &self.exclude_features,
            bands: self.bands.bands(),
            kfold_k: self.kfold_k,
            time_blocked_cv: self.time_blocked_cv,
            nrmse_threshold: self.nrmse_threshold,
            seeds: self.seeds,
            explain_repeats: self.explain_repeats,
            lime_samples: self.lime_samples,
            pdp_grid: self.pdp_grid,
            pdp_features: &self.pdp_features,
            hyper: &self.hyper,
        })
    }

    /// SHA-256 over the fields the shared artifact chain depends on; see
    /// [`PipelineView`].
    pub fn pipeline_hash(&self) -> String {
        sha256_json(&PipelineView {
            input: self.input.to_string_lossy().into_owned(),
            exclude_features: &self.exclude_features,
            bands: self.bands.bands(),
            kfold_k: self.kfold_k,
            time_blocked_cv: self.time_blocked_cv,
            nrmse_threshold: self.nrmse_threshold,
            seed_folds: self.seeds.folds,
            seed_models: self.seeds.models,
            hyper: &self.hyper,
        })
    }

    /// The evaluation roster for one task with config overrides applied.
    pub fn build_specs(&self, task: Task) -> Result<Vec<ModelSpec>, CliError> {
        let mut specs = zoo(task, self.seeds.models);
        for spec in &mut specs {
            if let Some(overrides) = self.hyper.get(spec.family.id()) {
                for (key, value) in overrides {
                    spec.hyper.set(spec.family, key, &value.to_value())?;
                }
            }
        }
        Ok(specs)
    }
}
