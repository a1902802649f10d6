//! The two-round evaluation and the next-day projection.
//!
//! Round 1 cross-validates every candidate spec and ranks them on the fold
//! mean (R² or accuracy). Round 2 takes one chosen model and produces the
//! task's diagnostic view: per-country normalized RMSE for regression, a
//! confusion matrix with per-class scores for classification.
//!
//! The projection withholds each country's final lag pair, retrains on the
//! rest, predicts the last observed day blind as a sanity check, and then
//! projects one day past the data from the final day's features. A runtime
//! audit confirms the withheld pair never reached the training rows.

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{split_scenario, BandMap, DatasetError, FoldPlan, SupervisedDataset, Task};
use crate::ingest::CountrySeries;
use crate::metrics::{
    classification_scores, confusion_matrix, cross_val, mcc, nrmse_by_country, regression_scores,
    scores_from_confusion, ClassificationScores, ConfusionMatrix, CountryNrmse, Mcc, MetricsError,
    RegressionScores,
};
use crate::models::{fit, ModelError, ModelSpec, TrainedModel};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("every candidate failed; see the leaderboard error column")]
    AllFailed,
    #[error("country {0:?} has no scenario row (it needs at least two records)")]
    UnknownCountry(String),
    #[error("withheld pair for {country} on {date} leaked into the training rows")]
    Leakage { country: String, date: NaiveDate },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

// ---------------------------------------------------------------- round one

/// Training-set scores of the full-data fit, task-appropriate.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainScores {
    Regression(RegressionScores),
    Classification(ClassificationScores),
}

#[derive(Debug, Clone, Serialize)]
pub struct LeaderboardRow {
    pub spec: ModelSpec,
    /// Cross-validated fold mean; absent when the candidate failed.
    pub cv_mean: Option<f64>,
    pub fold_scores: Vec<f64>,
    /// Scores on the training data itself — the overfitting indicator next
    /// to `cv_mean`.
    pub train: Option<TrainScores>,
    /// Out-of-bag score for bootstrapped forests.
    pub oob: Option<f64>,
    pub error: Option<String>,
}

/// Cross-validates and train-scores every spec. Failures never abort the
/// round; they become rows with the error recorded. Rows come back sorted by
/// fold mean, best first, failures last; ties keep the spec order given.
pub fn round1(
    specs: &[ModelSpec],
    data: &SupervisedDataset,
    plan: &FoldPlan,
) -> Vec<LeaderboardRow> {
    let mut rows: Vec<LeaderboardRow> = specs
        .par_iter()
        .map(|spec| match evaluate_spec(spec, data, plan) {
            Ok(row) => row,
            Err(error) => LeaderboardRow {
                spec: spec.clone(),
                cv_mean: None,
                fold_scores: Vec::new(),
                train: None,
                oob: None,
                error: Some(error.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |row: &LeaderboardRow| row.cv_mean.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a))
    });
    rows
}

fn evaluate_spec(
    spec: &ModelSpec,
    data: &SupervisedDataset,
    plan: &FoldPlan,
) -> Result<LeaderboardRow, ForecastError> {
    let cv = cross_val(spec, data, plan)?;
    let model = fit(spec, data)?;
    let train = match data.task {
        Task::Regression => {
            TrainScores::Regression(regression_scores(&data.y, &model.predict(&data.x)?)?)
        }
        Task::Classification => TrainScores::Classification(classification_scores(
            &data.classes(),
            &model.predict_classes(&data.x)?,
            data.n_classes,
        )?),
    };
    Ok(LeaderboardRow {
        spec: spec.clone(),
        cv_mean: Some(cv.mean),
        fold_scores: cv.fold_scores,
        train: Some(train),
        oob: model.oob_score(),
        error: None,
    })
}

/// How close two fold means must be to count as a tie. Reported scores are
/// read at two decimals, so anything inside half a hundredth is treated as
/// the same rank and settled by the secondary scores.
pub const TIE_WINDOW: f64 = 0.005;

/// Picks the winning row: highest fold mean; within [`TIE_WINDOW`] of the
/// top, classification prefers higher training F1 then accuracy, regression
/// prefers lower training MSE then higher R²; any remaining tie keeps the
/// earliest row.
pub fn select_best(rows: &[LeaderboardRow]) -> Result<&LeaderboardRow, ForecastError> {
    let best_cv = rows
        .iter()
        .filter_map(|r| r.cv_mean)
        .fold(f64::NEG_INFINITY, f64::max);
    if best_cv == f64::NEG_INFINITY {
        return Err(ForecastError::AllFailed);
    }
    let mut winner: Option<&LeaderboardRow> = None;
    for row in rows {
        let Some(cv) = row.cv_mean else { continue };
        if best_cv - cv >= TIE_WINDOW {
            continue;
        }
        let better = match winner {
            None => true,
            Some(current) => beats(row, current),
        };
        if better {
            winner = Some(row);
        }
    }
    Ok(winner.expect("at least one row has a fold mean"))
}

/// Strict improvement on the secondary scores; equality keeps `current`.
fn beats(challenger: &LeaderboardRow, current: &LeaderboardRow) -> bool {
    match (&challenger.train, &current.train) {
        (Some(TrainScores::Classification(a)), Some(TrainScores::Classification(b))) => {
            if a.f1 != b.f1 {
                return a.f1 > b.f1;
            }
            a.accuracy > b.accuracy
        }
        (Some(TrainScores::Regression(a)), Some(TrainScores::Regression(b))) => {
            if a.mse != b.mse {
                return a.mse < b.mse;
            }
            a.r2 > b.r2
        }
        _ => false,
    }
}

// ---------------------------------------------------------------- round two

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Round2 {
    Regression {
        threshold: f64,
        /// Mean of the per-country normalized RMSE values (degenerate
        /// entries contribute their pinned 0).
        mean_nrmse: f64,
        above_count: usize,
        countries: Vec<CountryNrmse>,
    },
    Classification {
        confusion: ConfusionMatrix,
        report: ClassificationScores,
        mcc: Mcc,
    },
}

/// Scores one trained model over a dataset in the task's diagnostic form.
pub fn round2(
    model: &TrainedModel,
    data: &SupervisedDataset,
    threshold: f64,
) -> Result<Round2, ForecastError> {
    Ok(match data.task {
        Task::Regression => {
            let predictions = model.predict(&data.x)?;
            let countries = nrmse_by_country(&data.row_keys, &data.y, &predictions, threshold)?;
            let mean_nrmse =
                countries.iter().map(|c| c.nrmse).sum::<f64>() / countries.len() as f64;
            let above_count = countries.iter().filter(|c| c.above_threshold).count();
            Round2::Regression {
                threshold,
                mean_nrmse,
                above_count,
                countries,
            }
        }
        Task::Classification => {
            let predictions = model.predict_classes(&data.x)?;
            let confusion = confusion_matrix(&data.classes(), &predictions, data.n_classes)?;
            let report = scores_from_confusion(&confusion);
            let mcc = mcc(&confusion);
            Round2::Classification {
                confusion,
                report,
                mcc,
            }
        }
    })
}

// --------------------------------------------------------------- projection

/// One model output with its band reading. Regression values floor to an
/// index level before banding; classification predicts the band directly.
#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    /// Raw model output: an index value (regression) or a class number
    /// (classification).
    pub value: f64,
    /// The floored, clamped index level; regression only.
    pub level: Option<u8>,
    pub band: String,
}

/// Blind check on the last observed day: the model never trained on this
/// pair.
#[derive(Debug, Clone, Serialize)]
pub struct HoldoutCheck {
    pub date: NaiveDate,
    /// Observed value on that day, in the task's units (index value or
    /// class number).
    pub actual: f64,
    pub actual_band: String,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassCount {
    pub class: usize,
    pub name: String,
    pub count: u64,
}

/// One plotted day: the observed value, the model's value, or both.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub actual: Option<f64>,
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionResult {
    pub country: String,
    pub task: Task,
    pub spec: ModelSpec,
    pub training_rows_used: usize,
    /// Absent when the country's last two days are not consecutive.
    pub holdout: Option<HoldoutCheck>,
    /// One day past the last observation.
    pub scenario_date: NaiveDate,
    pub scenario: Prediction,
    /// Band membership histogram over this country's observed days.
    pub class_counts: Vec<ClassCount>,
    /// Observed and fitted values per day, ending with the scenario point.
    pub series: Vec<SeriesPoint>,
}

/// Retrains `spec` with every country's final lag pair withheld, predicts
/// the target country's last day blind, and projects the day after its data
/// ends.
pub fn project_next_day(
    spec: &ModelSpec,
    series: &[CountrySeries],
    country: &str,
    map: &BandMap,
    excluded: &[String],
) -> Result<ProjectionResult, ForecastError> {
    let split = split_scenario(series, spec.task, map, excluded)?;
    audit_no_leakage(&split.training, &split.holdout)?;

    let scenario_row = split
        .scenario
        .iter()
        .find(|row| row.country == country)
        .ok_or_else(|| ForecastError::UnknownCountry(country.to_string()))?;
    let records = &series
        .iter()
        .find(|s| s.country == country)
        .expect("scenario row implies the series exists")
        .records;

    let model = fit(spec, &split.training)?;
    let predict_one = |x: &[f64]| -> Result<f64, ForecastError> {
        Ok(model.predict(std::slice::from_ref(&x.to_vec()))?[0])
    };

    let holdout_index = split
        .holdout
        .row_keys
        .iter()
        .position(|key| key.country == country);
    let holdout = match holdout_index {
        None => None,
        Some(i) => {
            let actual = split.holdout.y[i];
            let actual_band = match spec.task {
                Task::Regression => map.band_of(clamp_level(actual))?.0.to_string(),
                Task::Classification => split.holdout.class_names[actual as usize].clone(),
            };
            let value = predict_one(&split.holdout.x[i])?;
            Some(HoldoutCheck {
                date: split.holdout.row_keys[i].target_date(),
                actual,
                actual_band,
                prediction: banded(value, spec.task, map, &split.holdout.class_names)?,
            })
        }
    };

    let scenario_value = predict_one(&scenario_row.x)?;
    let scenario = banded(scenario_value, spec.task, map, &split.training.class_names)?;

    // Band histogram over the country's own records.
    let mut counts = vec![0u64; map.n_classes()];
    for record in records {
        counts[map.band_of(record.aqi)?.1] += 1;
    }
    let class_counts = map
        .class_names()
        .into_iter()
        .enumerate()
        .map(|(class, name)| ClassCount {
            class,
            name,
            count: counts[class],
        })
        .collect();

    let series_points = build_series(
        spec.task,
        map,
        records,
        &split,
        country,
        &model,
        holdout.as_ref(),
        scenario_row.date + Days::new(1),
        scenario_value,
    )?;

    Ok(ProjectionResult {
        country: country.to_string(),
        task: spec.task,
        spec: spec.clone(),
        training_rows_used: split.training.n_rows(),
        holdout,
        scenario_date: scenario_row.date + Days::new(1),
        scenario,
        class_counts,
        series: series_points,
    })
}

/// The withheld pairs must not appear among the training rows; a violation
/// means the split itself is broken, and no projection built on it can be
/// trusted.
fn audit_no_leakage(
    training: &SupervisedDataset,
    holdout: &SupervisedDataset,
) -> Result<(), ForecastError> {
    for key in &holdout.row_keys {
        if training.row_keys.contains(key) {
            return Err(ForecastError::Leakage {
                country: key.country.clone(),
                date: key.feature_date,
            });
        }
    }
    Ok(())
}

fn clamp_level(value: f64) -> u8 {
    if value.is_nan() {
        // max/min would pin NaN to 1 silently; keep that pin but explicit.
        return 1;
    }
    value.floor().clamp(1.0, 10.0) as u8
}

fn banded(
    value: f64,
    task: Task,
    map: &BandMap,
    class_names: &[String],
) -> Result<Prediction, ForecastError> {
    Ok(match task {
        Task::Regression => {
            let level = clamp_level(value);
            Prediction {
                value,
                level: Some(level),
                band: map.band_of(level)?.0.to_string(),
            }
        }
        Task::Classification => Prediction {
            value,
            level: None,
            band: class_names[value as usize].clone(),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn build_series(
    task: Task,
    map: &BandMap,
    records: &[crate::ingest::CleanRecord],
    split: &crate::dataset::ScenarioSplit,
    country: &str,
    model: &TrainedModel,
    holdout: Option<&HoldoutCheck>,
    scenario_date: NaiveDate,
    scenario_value: f64,
) -> Result<Vec<SeriesPoint>, ForecastError> {
    // Fitted values for this country's training pairs, keyed by target day.
    let indices: Vec<usize> = (0..split.training.n_rows())
        .filter(|&i| split.training.row_keys[i].country == country)
        .collect();
    let fitted = if indices.is_empty() {
        Vec::new()
    } else {
        let x: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| split.training.x[i].clone())
            .collect();
        model.predict(&x)?
    };
    let mut predicted: Vec<(NaiveDate, f64)> = indices
        .iter()
        .zip(&fitted)
        .map(|(&i, &value)| (split.training.row_keys[i].target_date(), value))
        .collect();
    if let Some(check) = holdout {
        predicted.push((check.date, check.prediction.value));
    }

    let mut points = Vec::with_capacity(records.len() + 1);
    for record in records {
        let actual = match task {
            Task::Regression => record.aqi as f64,
            Task::Classification => map.band_of(record.aqi)?.1 as f64,
        };
        let prediction = predicted
            .iter()
            .find(|(date, _)| *date == record.date)
            .map(|&(_, value)| value);
        points.push(SeriesPoint {
            date: record.date,
            actual: Some(actual),
            predicted: prediction,
        });
    }
    points.push(SeriesPoint {
        date: scenario_date,
        actual: None,
        predicted: Some(scenario_value),
    });
    Ok(points)
}
