//! `aqicast ingest` — parse the raw export, clean it, and write the
//! canonical observation table every later stage consumes.

use serde::Serialize;

use aqicast_core::ingest::{clean, parse_csv, to_clean_csv, SchemaReport};

use crate::artifacts::{ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

#[derive(Serialize)]
struct SchemaArtifact<'a> {
    provenance: Provenance,
    input: String,
    report: &'a SchemaReport,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let raw = parse_csv(&config.input)?;
    let (records, report) = clean(&raw)?;
    if records.is_empty() {
        return Err(CliError::Insufficient(format!(
            "{} produced no usable rows after cleaning ({} read, all dropped)",
            config.input.display(),
            report.input_rows
        )));
    }

    let mut set = ArtifactSet::new(config);
    set.text("clean.csv", &to_clean_csv(&records))?;
    set.json(
        "schema_report.json",
        &SchemaArtifact {
            provenance: Provenance::of(config),
            input: config.input.display().to_string(),
            report: &report,
        },
    )?;
    set.finish()?;

    eprintln!(
        "ingest: kept {} of {} rows across {} dropped / {} duplicate-date collapses",
        report.kept_rows,
        report.input_rows,
        report.dropped_row_count,
        report.duplicate_date_collapsed_count
    );
    Ok(())
}
