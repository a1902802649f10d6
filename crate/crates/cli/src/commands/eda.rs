//! `aqicast eda` — two-cluster profile of the cleaned observations plus
//! the full feature/target correlation matrix.

use serde::Serialize;

use aqicast_core::eda::{kmeans, pearson_matrix, standardize, summarize_clusters, ClusterSummary};
use aqicast_core::ingest::CleanRecord;

use crate::artifacts::{cell, ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

#[derive(Serialize)]
struct ClustersArtifact<'a> {
    provenance: Provenance,
    k: usize,
    restarts: usize,
    inertia: f64,
    iterations: usize,
    /// Countries appearing in exactly one cluster.
    difference_count: usize,
    feature_names: Vec<&'static str>,
    summary: &'a ClusterSummary,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let records = super::load_clean_records(config)?;
    let (matrix, _) = standardize(&records)?;
    let run = kmeans(&matrix, 2, config.seeds.kmeans)?;
    let summary = summarize_clusters(&records, &run.assignments)?;
    let corr = pearson_matrix(&records)?;

    let mut set = ArtifactSet::new(config);
    set.json(
        "clusters.json",
        &ClustersArtifact {
            provenance: Provenance::of(config),
            k: 2,
            restarts: 10,
            inertia: run.inertia,
            iterations: run.iterations,
            difference_count: summary.difference_countries.len(),
            feature_names: aqicast_core::ingest::FEATURE_NAMES.to_vec(),
            summary: &summary,
        },
    )?;

    // Square matrix with labelled rows and columns.
    let mut header = vec!["feature".to_string()];
    header.extend(corr.labels.iter().cloned());
    let mut rows = Vec::with_capacity(corr.labels.len());
    for (label, values) in corr.labels.iter().zip(&corr.values) {
        let mut row = vec![label.clone()];
        row.extend(values.iter().map(|&v| cell(v)));
        rows.push(row);
    }
    set.csv("correlation.csv", &header, &rows)?;

    set.csv(
        "aqi_frequency.csv",
        &frequency_header(),
        &frequency_rows(&records, &summary),
    )?;
    set.finish()?;

    eprintln!(
        "eda: clusters of {} / {} records ({} countries appear in only one cluster)",
        summary.record_counts[0],
        summary.record_counts[1],
        summary.difference_countries.len()
    );
    Ok(())
}

fn frequency_header() -> Vec<String> {
    let mut header = vec!["group".to_string()];
    header.extend((1..=10).map(|level| level.to_string()));
    header
}

/// Index-level counts per cluster, plus the same tally restricted to the
/// countries that appear in exactly one cluster.
fn frequency_rows(records: &[CleanRecord], summary: &ClusterSummary) -> Vec<Vec<String>> {
    let mut differences = [0u64; 10];
    for r in records {
        if summary.difference_countries.contains(&r.country) {
            let level = r.aqi.max(1) as usize;
            differences[level - 1] += 1;
        }
    }
    let mut rows = Vec::with_capacity(3);
    for (name, counts) in [
        ("cluster_0", &summary.aqi_frequency[0]),
        ("cluster_1", &summary.aqi_frequency[1]),
        ("differences", &differences),
    ] {
        let mut row = vec![name.to_string()];
        row.extend(counts.iter().map(|c| c.to_string()));
        rows.push(row);
    }
    rows
}
