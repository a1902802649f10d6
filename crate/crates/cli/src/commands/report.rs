//! `aqicast report` — one summary document: the regression-versus-
//! classification generalizability comparison plus every JSON artifact in
//! the output directory, bundled verbatim.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use aqicast_core::dataset::Task;
use aqicast_core::models::ModelSpec;

use crate::artifacts::{check_fresh, read_json, ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

#[derive(Serialize)]
struct SummaryArtifact {
    provenance: Provenance,
    generalizability: Generalizability,
    /// Every JSON artifact currently on disk, keyed by its relative path.
    /// `run_meta.json` (timestamps) and this file are excluded.
    artifacts: BTreeMap<String, Value>,
}

/// Cross-validated scores of the selected best model per task, compared
/// raw. The gap is reported absolute and relative to the regression score;
/// no headline percentage is derived from it.
#[derive(Serialize)]
struct Generalizability {
    regression_cv: Option<f64>,
    classification_cv: Option<f64>,
    /// `classification_cv - regression_cv`.
    absolute_gap: Option<f64>,
    /// Absolute gap divided by `|regression_cv|`; absent when the
    /// regression score is (numerically) zero.
    relative_gap: Option<f64>,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let lb_path = super::leaderboard_path(config);
    let leaderboard = read_json(&lb_path, "evaluate")?;
    check_fresh(&leaderboard, &lb_path, config, "evaluate")?;

    let regression_cv = task_cv(&leaderboard, Task::Regression)?;
    let classification_cv = task_cv(&leaderboard, Task::Classification)?;
    let absolute_gap = match (regression_cv, classification_cv) {
        (Some(r), Some(c)) => Some(c - r),
        _ => None,
    };
    let relative_gap = match (absolute_gap, regression_cv) {
        (Some(gap), Some(r)) if r.abs() > 1e-12 => Some(gap / r.abs()),
        _ => None,
    };

    let mut set = ArtifactSet::new(config);
    set.json(
        "summary.json",
        &SummaryArtifact {
            provenance: Provenance::of(config),
            generalizability: Generalizability {
                regression_cv,
                classification_cv,
                absolute_gap,
                relative_gap,
            },
            artifacts: collect_artifacts(&config.out)?,
        },
    )?;
    set.finish()?;

    match (regression_cv, classification_cv) {
        (Some(r), Some(c)) => {
            eprintln!(
                "report: classification cv {c:.4} vs regression cv {r:.4} (gap {:.4})",
                c - r
            )
        }
        _ => eprintln!("report: single-task run; no generalizability gap to compare"),
    }
    Ok(())
}

/// The selected best model's cross-validated mean for one task, if the
/// leaderboard covers that task.
fn task_cv(leaderboard: &Value, task: Task) -> Result<Option<f64>, CliError> {
    let key = super::task_key(task);
    let Some(board) = leaderboard.pointer(&format!("/tasks/{key}")) else {
        return Ok(None);
    };
    let malformed =
        |what: &str| CliError::Usage(format!("leaderboard.json has a malformed {key} {what}"));
    let best: ModelSpec =
        serde_json::from_value(board["best"].clone()).map_err(|_| malformed("best entry"))?;
    let rows = board["rows"]
        .as_array()
        .ok_or_else(|| malformed("row list"))?;
    for row in rows {
        let spec: ModelSpec =
            serde_json::from_value(row["spec"].clone()).map_err(|_| malformed("row spec"))?;
        if spec == best {
            return Ok(row["cv_mean"].as_f64());
        }
    }
    Err(malformed("best entry (it matches no row)"))
}

/// Reads every known JSON artifact under `out`, in a fixed enumeration
/// order; the sorted map makes the bundle layout deterministic.
fn collect_artifacts(out: &Path) -> Result<BTreeMap<String, Value>, CliError> {
    let mut artifacts = BTreeMap::new();
    let add = |rel: String, artifacts: &mut BTreeMap<String, Value>| -> Result<(), CliError> {
        let path = out.join(&rel);
        if !path.exists() {
            return Ok(());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| crate::errors::io_error(&path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{} is not valid JSON: {e}", path.display())))?;
        artifacts.insert(rel, value);
        Ok(())
    };

    for name in [
        "schema_report.json",
        "clusters.json",
        "dataset.json",
        "leaderboard.json",
        "round2.json",
    ] {
        add(name.to_string(), &mut artifacts)?;
    }
    for task in ["regression", "classification"] {
        for name in ["explain.json", "lime.json"] {
            add(format!("explain/{task}/{name}"), &mut artifacts)?;
        }
        let dir = out.join("project").join(task);
        if dir.is_dir() {
            let mut names: Vec<String> = std::fs::read_dir(&dir)
                .map_err(|e| crate::errors::io_error(&dir, e))?
                .filter_map(|entry| entry.ok())
                .map(|entry| entry.file_name().to_string_lossy().into_owned())
                .filter(|name| name.ends_with(".json"))
                .collect();
            names.sort();
            for name in names {
                add(format!("project/{task}/{name}"), &mut artifacts)?;
            }
        }
    }
    Ok(artifacts)
}
