//! `aqicast train` — build the lag-1 supervised datasets and fit the full
//! model roster on them, one JSON file per fitted model.

use std::collections::BTreeMap;

use serde::Serialize;

use aqicast_core::dataset::BandMap;
use aqicast_core::models::fit;

use crate::artifacts::{ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

#[derive(Serialize)]
struct DatasetArtifact<'a> {
    provenance: Provenance,
    bands: &'a BandMap,
    excluded_features: &'a [String],
    tasks: BTreeMap<&'static str, TaskSummary>,
}

#[derive(Serialize)]
struct TaskSummary {
    n_rows: usize,
    n_features: usize,
    feature_names: Vec<String>,
    n_classes: usize,
    class_names: Vec<String>,
    excluded_gap_count: usize,
    clamped_aqi_count: usize,
    /// Models that failed to fit on this data, by family id. The roster is
    /// fitted best-effort: a singular linear system in one family must not
    /// block the rest, and `evaluate` reports per-model failures itself.
    fit_errors: BTreeMap<String, String>,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let series = super::load_series(config)?;
    let mut set = ArtifactSet::new(config);
    let mut tasks = BTreeMap::new();

    for task in config.task.tasks() {
        let data = super::build_dataset(config, &series, task)?;
        let specs = config.build_specs(task)?;
        let mut fit_errors = BTreeMap::new();
        let mut fitted = 0usize;
        for spec in &specs {
            match fit(spec, &data) {
                Ok(model) => {
                    let mut text = model.to_json();
                    text.push('\n');
                    set.text(&super::model_rel_path(task, spec.family), &text)?;
                    fitted += 1;
                }
                Err(e) => {
                    fit_errors.insert(spec.family.id().to_string(), e.to_string());
                }
            }
        }
        if fitted == 0 {
            return Err(CliError::Numeric(format!(
                "no {task} model could be fitted; last error: {}",
                fit_errors
                    .values()
                    .next_back()
                    .map(String::as_str)
                    .unwrap_or("none")
            )));
        }
        eprintln!(
            "train: {task} on {} rows x {} features, {fitted}/{} models fitted",
            data.n_rows(),
            data.n_features(),
            specs.len()
        );
        tasks.insert(
            super::task_key(task),
            TaskSummary {
                n_rows: data.n_rows(),
                n_features: data.n_features(),
                feature_names: data.feature_names.clone(),
                n_classes: data.n_classes,
                class_names: data.class_names.clone(),
                excluded_gap_count: data.excluded_gap_count,
                clamped_aqi_count: data.clamped_aqi_count,
                fit_errors,
            },
        );
    }

    set.json(
        "dataset.json",
        &DatasetArtifact {
            provenance: Provenance::of(config),
            bands: &config.bands,
            excluded_features: &config.exclude_features,
            tasks,
        },
    )?;
    set.finish()?;
    Ok(())
}
