//! The seven pipeline subcommands and the filesystem contract between them.
//!
//! Commands compose through the output directory: `ingest` writes
//! `clean.csv`, `train` adds the `dataset.json` sidecar plus fitted models,
//! `evaluate` ranks them into `leaderboard.json` and round-2 diagnostics,
//! and `explain`/`project` consume the recorded best model. `report`
//! bundles every JSON artifact into one summary. Each command checks that
//! its upstream artifacts exist and were produced by the current config,
//! failing with exit code 2 and the name of the command to run otherwise.

pub mod eda;
pub mod evaluate;
pub mod explain;
pub mod ingest;
pub mod project;
pub mod report;
pub mod train;

use std::path::PathBuf;

use aqicast_core::dataset::{
    build_supervised, kfold, kfold_time_blocked, FoldPlan, SupervisedDataset, Task,
};
use aqicast_core::ingest::{clean, group_by_country, parse_csv, CleanRecord, CountrySeries};
use aqicast_core::models::{Family, ModelSpec, TrainedModel};

use crate::artifacts::{check_fresh, read_json};
use crate::config::PipelineConfig;
use crate::errors::CliError;

pub(crate) fn clean_csv_path(config: &PipelineConfig) -> PathBuf {
    config.out.join("clean.csv")
}

pub(crate) fn dataset_sidecar_path(config: &PipelineConfig) -> PathBuf {
    config.out.join("dataset.json")
}

pub(crate) fn leaderboard_path(config: &PipelineConfig) -> PathBuf {
    config.out.join("leaderboard.json")
}

/// `models/<task>_<family>.json`, relative to the output directory.
pub(crate) fn model_rel_path(task: Task, family: Family) -> String {
    format!("models/{task}_{}.json", family.id())
}

pub(crate) fn task_key(task: Task) -> &'static str {
    match task {
        Task::Regression => "regression",
        Task::Classification => "classification",
    }
}

/// Re-reads the cleaned observations written by `ingest`.
pub(crate) fn load_clean_records(config: &PipelineConfig) -> Result<Vec<CleanRecord>, CliError> {
    let path = clean_csv_path(config);
    if !path.exists() {
        return Err(CliError::missing(&path, "ingest"));
    }
    let raw = parse_csv(&path)?;
    let (records, _) = clean(&raw)?;
    Ok(records)
}

pub(crate) fn load_series(config: &PipelineConfig) -> Result<Vec<CountrySeries>, CliError> {
    Ok(group_by_country(load_clean_records(config)?))
}

pub(crate) fn build_dataset(
    config: &PipelineConfig,
    series: &[CountrySeries],
    task: Task,
) -> Result<SupervisedDataset, CliError> {
    Ok(build_supervised(
        series,
        task,
        &config.bands,
        &config.exclude_features,
    )?)
}

/// The cross-validation plan the config asks for: seeded shuffled folds by
/// default, contiguous date-ordered blocks when `time_blocked_cv` is set.
pub(crate) fn fold_plan(
    config: &PipelineConfig,
    data: &SupervisedDataset,
) -> Result<FoldPlan, CliError> {
    Ok(if config.time_blocked_cv {
        kfold_time_blocked(&data.row_keys, config.kfold_k)?
    } else {
        kfold(data.n_rows(), config.kfold_k, config.seeds.folds)?
    })
}

/// Verifies `dataset.json` exists and matches the current config.
pub(crate) fn check_sidecar(config: &PipelineConfig) -> Result<(), CliError> {
    let path = dataset_sidecar_path(config);
    let value = read_json(&path, "train")?;
    check_fresh(&value, &path, config, "train")
}

/// Loads a model fitted by `train`, verifying it matches the expected spec.
pub(crate) fn load_model(
    config: &PipelineConfig,
    expected: &ModelSpec,
) -> Result<TrainedModel, CliError> {
    let rel = model_rel_path(expected.task, expected.family);
    let path = config.out.join(&rel);
    if !path.exists() {
        return Err(CliError::missing(&path, "train"));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| crate::errors::io_error(&path, e))?;
    let model = TrainedModel::from_json(&text)?;
    if &model.spec != expected {
        return Err(CliError::Usage(format!(
            "{} was fitted under a different spec; re-run `aqicast train`",
            path.display()
        )));
    }
    Ok(model)
}

/// Reads the best spec `evaluate` recorded for one task.
pub(crate) fn best_spec(config: &PipelineConfig, task: Task) -> Result<ModelSpec, CliError> {
    let path = leaderboard_path(config);
    let value = read_json(&path, "evaluate")?;
    check_fresh(&value, &path, config, "evaluate")?;
    let pointer = format!("/tasks/{}/best", task_key(task));
    let best = value.pointer(&pointer).cloned().ok_or_else(|| {
        CliError::Usage(format!(
            "{} has no {task} results; re-run `aqicast evaluate` with a config covering that task",
            path.display()
        ))
    })?;
    serde_json::from_value(best).map_err(|e| {
        CliError::Usage(format!(
            "{} has a malformed best-model entry: {e}",
            path.display()
        ))
    })
}
