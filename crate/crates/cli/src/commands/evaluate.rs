//! `aqicast evaluate` — the two-round assessment: a cross-validated
//! leaderboard over the whole roster, then per-country or per-class
//! diagnostics of the selected winner.

use std::collections::BTreeMap;

use serde::Serialize;

use aqicast_core::dataset::Task;
use aqicast_core::forecast::{round1, round2, select_best, LeaderboardRow, Round2, TrainScores};
use aqicast_core::models::ModelSpec;

use crate::artifacts::{cell, ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

#[derive(Serialize)]
struct LeaderboardArtifact<'a> {
    provenance: Provenance,
    kfold_k: usize,
    time_blocked_cv: bool,
    tasks: BTreeMap<&'static str, TaskBoard<'a>>,
}

#[derive(Serialize)]
struct TaskBoard<'a> {
    best: &'a ModelSpec,
    rows: &'a [LeaderboardRow],
}

#[derive(Serialize)]
struct Round2Artifact<'a> {
    provenance: Provenance,
    nrmse_threshold: f64,
    tasks: BTreeMap<&'static str, TaskRound2<'a>>,
}

#[derive(Serialize)]
struct TaskRound2<'a> {
    spec: &'a ModelSpec,
    result: &'a Round2,
}

struct TaskOutput {
    task: Task,
    rows: Vec<LeaderboardRow>,
    best: ModelSpec,
    diagnostics: Round2,
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    super::check_sidecar(config)?;
    let series = super::load_series(config)?;

    let mut outputs = Vec::new();
    for task in config.task.tasks() {
        let data = super::build_dataset(config, &series, task)?;
        let plan = super::fold_plan(config, &data)?;
        let specs = config.build_specs(task)?;
        let rows = round1(&specs, &data, &plan);
        let best = select_best(&rows)?.spec.clone();
        let model = super::load_model(config, &best)?;
        let diagnostics = round2(&model, &data, config.nrmse_threshold)?;
        eprintln!(
            "evaluate: {task} best {} (cv {:.4})",
            best.family.id(),
            rows.iter()
                .find(|r| r.spec == best)
                .and_then(|r| r.cv_mean)
                .unwrap_or(f64::NAN)
        );
        outputs.push(TaskOutput {
            task,
            rows,
            best,
            diagnostics,
        });
    }

    let mut set = ArtifactSet::new(config);
    set.json(
        "leaderboard.json",
        &LeaderboardArtifact {
            provenance: Provenance::of(config),
            kfold_k: config.kfold_k,
            time_blocked_cv: config.time_blocked_cv,
            tasks: outputs
                .iter()
                .map(|o| {
                    (
                        super::task_key(o.task),
                        TaskBoard {
                            best: &o.best,
                            rows: &o.rows,
                        },
                    )
                })
                .collect(),
        },
    )?;
    for output in &outputs {
        let (name, header_row) = board_layout(output.task);
        let rows: Vec<Vec<String>> = output.rows.iter().map(board_row).collect();
        set.csv(name, &header_row, &rows)?;
    }
    set.json(
        "round2.json",
        &Round2Artifact {
            provenance: Provenance::of(config),
            nrmse_threshold: config.nrmse_threshold,
            tasks: outputs
                .iter()
                .map(|o| {
                    (
                        super::task_key(o.task),
                        TaskRound2 {
                            spec: &o.best,
                            result: &o.diagnostics,
                        },
                    )
                })
                .collect(),
        },
    )?;
    for output in &outputs {
        write_diagnostics_csv(&mut set, &output.diagnostics)?;
    }
    set.finish()?;
    Ok(())
}

fn board_layout(task: Task) -> (&'static str, Vec<String>) {
    match task {
        Task::Regression => (
            "leaderboard_regression.csv",
            [
                "regressor",
                "mean_cross_val_score",
                "mse",
                "r2_score",
                "mean_residuals",
            ]
            .map(String::from)
            .to_vec(),
        ),
        Task::Classification => (
            "leaderboard_classification.csv",
            [
                "classifier",
                "mean_cross_val_score",
                "accuracy",
                "precision",
                "recall",
                "f1",
            ]
            .map(String::from)
            .to_vec(),
        ),
    }
}

/// One leaderboard line; failed candidates keep their name and leave the
/// numeric cells empty.
fn board_row(row: &LeaderboardRow) -> Vec<String> {
    let mut cells = vec![
        row.spec.family.id().to_string(),
        row.cv_mean.map(cell).unwrap_or_default(),
    ];
    match &row.train {
        Some(TrainScores::Regression(s)) => {
            cells.extend([cell(s.mse), cell(s.r2), cell(s.mean_residual)]);
        }
        Some(TrainScores::Classification(s)) => {
            cells.extend([
                cell(s.accuracy),
                cell(s.precision),
                cell(s.recall),
                cell(s.f1),
            ]);
        }
        None => {
            let width = match row.spec.task {
                Task::Regression => 3,
                Task::Classification => 4,
            };
            cells.extend((0..width).map(|_| String::new()));
        }
    }
    cells
}

fn write_diagnostics_csv(set: &mut ArtifactSet, diagnostics: &Round2) -> Result<(), CliError> {
    match diagnostics {
        Round2::Regression { countries, .. } => {
            let header: Vec<String> = [
                "country",
                "n",
                "rmse",
                "mean",
                "nrmse",
                "range",
                "nrmse_range",
                "above_threshold",
                "degenerate",
            ]
            .map(String::from)
            .to_vec();
            let rows: Vec<Vec<String>> = countries
                .iter()
                .map(|c| {
                    vec![
                        c.country.clone(),
                        c.n.to_string(),
                        cell(c.rmse),
                        cell(c.mean),
                        cell(c.nrmse),
                        cell(c.range),
                        cell(c.nrmse_range),
                        c.above_threshold.to_string(),
                        c.degenerate.to_string(),
                    ]
                })
                .collect();
            set.csv("nrmse_by_country.csv", &header, &rows)?;
        }
        Round2::Classification {
            confusion, report, ..
        } => {
            // Rows are predicted classes, columns are actual classes.
            let mut header = vec!["predicted_class".to_string()];
            header.extend((0..confusion.n_classes()).map(|c| c.to_string()));
            let rows: Vec<Vec<String>> = confusion
                .counts
                .iter()
                .enumerate()
                .map(|(predicted, counts)| {
                    let mut row = vec![predicted.to_string()];
                    row.extend(counts.iter().map(|c| c.to_string()));
                    row
                })
                .collect();
            set.csv("confusion_matrix.csv", &header, &rows)?;

            let header: Vec<String> = [
                "class",
                "precision",
                "recall",
                "f1_score",
                "accuracy",
                "support",
            ]
            .map(String::from)
            .to_vec();
            let mut rows: Vec<Vec<String>> = report
                .per_class
                .iter()
                .map(|c| {
                    vec![
                        c.class.to_string(),
                        cell(c.precision),
                        cell(c.recall),
                        cell(c.f1),
                        String::new(),
                        c.support.to_string(),
                    ]
                })
                .collect();
            rows.push(vec![
                "weighted".to_string(),
                cell(report.precision),
                cell(report.recall),
                cell(report.f1),
                cell(report.accuracy),
                confusion.total.to_string(),
            ]);
            set.csv("classification_report.csv", &header, &rows)?;
        }
    }
    Ok(())
}
