//! `aqicast project` — next-day outlook for one country using the recorded
//! best model per task, with a blind check on the last observed day.

use serde::Serialize;

use aqicast_core::forecast::{project_next_day, ProjectionResult};

use crate::artifacts::{cell, sanitize, ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

/// Index values 1-3 carry the band name "Low" under the default bands; some
/// narratives loosely call a value like 3.6 "moderate", but the band map is
/// authoritative here.
const BAND_NOTE: &str =
    "band names come from the configured band map applied to the floored, clamped index level";

#[derive(Serialize)]
struct ProjectionArtifact<'a> {
    provenance: Provenance,
    band_note: &'static str,
    result: &'a ProjectionResult,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let country = config.country.as_deref().ok_or_else(|| {
        CliError::Usage("project needs a country; pass --country or set `country`".to_string())
    })?;
    let series = super::load_series(config)?;

    let mut set = ArtifactSet::new(config);
    for task in config.task.tasks() {
        let best = super::best_spec(config, task)?;
        let result = project_next_day(
            &best,
            &series,
            country,
            &config.bands,
            &config.exclude_features,
        )?;
        let stem = format!("project/{task}/projection_{}", sanitize(country));
        set.json(
            &format!("{stem}.json"),
            &ProjectionArtifact {
                provenance: Provenance::of(config),
                band_note: BAND_NOTE,
                result: &result,
            },
        )?;

        let header = ["date", "actual", "predicted"].map(String::from).to_vec();
        let rows: Vec<Vec<String>> = result
            .series
            .iter()
            .map(|p| {
                vec![
                    p.date.to_string(),
                    p.actual.map(cell).unwrap_or_default(),
                    p.predicted.map(cell).unwrap_or_default(),
                ]
            })
            .collect();
        set.csv(&format!("{stem}_series.csv"), &header, &rows)?;

        eprintln!(
            "project: {task} {country} {} -> {} ({})",
            result.scenario_date,
            cell(result.scenario.value),
            result.scenario.band
        );
    }
    set.finish()?;
    Ok(())
}
