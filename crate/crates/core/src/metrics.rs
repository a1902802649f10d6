//! Model scoring: regression error summaries, classification reports with
//! per-class detail, per-country normalized RMSE, and k-fold
//! cross-validation.
//!
//! Degenerate inputs never panic or return NaN: zero target spread pins R²
//! to 0, a class nobody predicted gets precision 0, a constant marginal pins
//! the correlation coefficient to 0 — always alongside a flag so reports can
//! say the number was pinned rather than computed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{FoldPlan, RowKey, SupervisedDataset, Task};
use crate::models::{fit, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot score an empty prediction set")]
    Empty,
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("fold plan covers {plan} rows but the dataset has {rows}")]
    FoldMismatch { rows: usize, plan: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

// ---------------------------------------------------------------- regression

#[derive(Debug, Clone, Serialize)]
pub struct RegressionScores {
    pub mse: f64,
    pub r2: f64,
    /// Mean of observed minus predicted — a bias indicator.
    pub mean_residual: f64,
    /// True when the targets had zero spread and `r2` was pinned to 0.
    pub r2_degenerate: bool,
}

pub fn regression_scores(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionScores, MetricsError> {
    check_lengths(y_true.len(), y_pred.len())?;
    let n = y_true.len() as f64;
    let mse = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / n;
    let mean_residual = y_true.iter().zip(y_pred).map(|(y, p)| y - p).sum::<f64>() / n;
    let (r2, r2_degenerate) = r2_score(y_true, y_pred);
    Ok(RegressionScores {
        mse,
        r2,
        mean_residual,
        r2_degenerate,
    })
}

/// Coefficient of determination and a flag that is true when the targets
/// had zero spread (the score is then pinned to 0).
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> (f64, bool) {
    if y_true.is_empty() {
        return (0.0, true);
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return (0.0, true);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    (1.0 - ss_res / ss_tot, false)
}

/// Fraction of matching labels. Panics on empty or mismatched input; use
/// [`classification_scores`] for validated scoring.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len());
    assert!(!y_true.is_empty());
    let hits = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    hits as f64 / y_true.len() as f64
}

// ------------------------------------------------------------ classification

/// Label counts oriented predicted-class rows × actual-class columns.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionMatrix {
    /// `counts[predicted][actual]`.
    pub counts: Vec<Vec<u64>>,
    /// Rows per actual class (the column sums).
    pub supports: Vec<u64>,
    pub total: u64,
    /// Diagonal sum.
    pub correct: u64,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Rows per predicted class (the row sums).
    pub fn predicted_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let class = t.max(p);
        if class >= n_classes {
            return Err(MetricsError::ClassOutOfRange { class, n_classes });
        }
        counts[p][t] += 1;
    }
    let supports = (0..n_classes)
        .map(|class| counts.iter().map(|row| row[class]).sum())
        .collect();
    let correct = (0..n_classes).map(|class| counts[class][class]).sum();
    Ok(ConfusionMatrix {
        counts,
        supports,
        total: y_true.len() as u64,
        correct,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassScores {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Rows that actually belong to this class.
    pub support: u64,
    /// False when nothing was predicted as this class and precision was
    /// pinned to 0.
    pub precision_defined: bool,
    /// False when no row belongs to this class and recall was pinned to 0.
    pub recall_defined: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    /// Support-weighted precision.
    pub precision: f64,
    /// Support-weighted recall; equals accuracy by construction.
    pub recall: f64,
    /// Support-weighted F1.
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
}

pub fn classification_scores(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ClassificationScores, MetricsError> {
    Ok(scores_from_confusion(&confusion_matrix(
        y_true, y_pred, n_classes,
    )?))
}

/// Per-class and support-weighted scores recomputed from a confusion matrix.
pub fn scores_from_confusion(cm: &ConfusionMatrix) -> ClassificationScores {
    let predicted = cm.predicted_totals();
    let mut per_class = Vec::with_capacity(cm.n_classes());
    for class in 0..cm.n_classes() {
        let true_positive = cm.counts[class][class] as f64;
        let precision_defined = predicted[class] > 0;
        let recall_defined = cm.supports[class] > 0;
        let precision = if precision_defined {
            true_positive / predicted[class] as f64
        } else {
            0.0
        };
        let recall = if recall_defined {
            true_positive / cm.supports[class] as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScores {
            class,
            precision,
            recall,
            f1,
            support: cm.supports[class],
            precision_defined,
            recall_defined,
        });
    }

    let total = cm.total as f64;
    let weighted = |pick: fn(&ClassScores) -> f64| -> f64 {
        per_class
            .iter()
            .map(|c| c.support as f64 * pick(c))
            .sum::<f64>()
            / total
    };
    ClassificationScores {
        accuracy: cm.accuracy(),
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
        per_class,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Mcc {
    pub value: f64,
    /// True when a marginal distribution was constant, which leaves the
    /// correlation undefined; the value is pinned to 0.
    pub degenerate: bool,
}

/// Matthews correlation coefficient, multiclass form: with `c` correct
/// predictions out of `s`, predicted marginals `p_k`, and actual marginals
/// `t_k`, the value is `(c·s − Σ p_k t_k) / √((s² − Σ p_k²)(s² − Σ t_k²))`.
pub fn mcc(cm: &ConfusionMatrix) -> Mcc {
    let s = cm.total as f64;
    let c = cm.correct as f64;
    let predicted = cm.predicted_totals();
    let mut sum_pt = 0.0;
    let mut sum_p2 = 0.0;
    let mut sum_t2 = 0.0;
    for class in 0..cm.n_classes() {
        let p = predicted[class] as f64;
        let t = cm.supports[class] as f64;
        sum_pt += p * t;
        sum_p2 += p * p;
        sum_t2 += t * t;
    }
    let denom = ((s * s - sum_p2) * (s * s - sum_t2)).sqrt();
    if denom == 0.0 {
        Mcc {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Mcc {
            value: (c * s - sum_pt) / denom,
            degenerate: false,
        }
    }
}

// ------------------------------------------------------- per-country nRMSE

#[derive(Debug, Clone, Serialize)]
pub struct CountryNrmse {
    pub country: String,
    /// Rows scored for this country.
    pub n: usize,
    pub rmse: f64,
    /// Mean of the observed targets — the primary normalizer.
    pub mean: f64,
    /// RMSE divided by the mean; falls back to the observed range when the
    /// mean is zero, and is pinned to 0 (flagged) when both are zero.
    pub nrmse: f64,
    /// Observed target range (max − min).
    pub range: f64,
    /// RMSE divided by the range; 0 when the range is zero.
    pub nrmse_range: f64,
    pub above_threshold: bool,
    /// True when both normalizers were zero and `nrmse` was pinned to 0.
    pub degenerate: bool,
}

/// Normalized RMSE per country, sorted by country name. `row_keys`, truth,
/// and predictions line up index-by-index (as produced by a supervised
/// dataset and a model's predictions over it).
pub fn nrmse_by_country(
    row_keys: &[RowKey],
    y_true: &[f64],
    y_pred: &[f64],
    threshold: f64,
) -> Result<Vec<CountryNrmse>, MetricsError> {
    check_lengths(y_true.len(), y_pred.len())?;
    check_lengths(row_keys.len(), y_true.len())?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, key) in row_keys.iter().enumerate() {
        groups.entry(&key.country).or_default().push(i);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (country, indices) in groups {
        let n = indices.len();
        let rmse = (indices
            .iter()
            .map(|&i| (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let mean = indices.iter().map(|&i| y_true[i]).sum::<f64>() / n as f64;
        let max = indices
            .iter()
            .map(|&i| y_true[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let min = indices
            .iter()
            .map(|&i| y_true[i])
            .fold(f64::INFINITY, f64::min);
        let range = max - min;
        let nrmse_range = if range > 0.0 { rmse / range } else { 0.0 };
        let (nrmse, degenerate) = if mean != 0.0 {
            (rmse / mean, false)
        } else if range > 0.0 {
            (nrmse_range, false)
        } else {
            (0.0, true)
        };
        rows.push(CountryNrmse {
            country: country.to_string(),
            n,
            rmse,
            mean,
            nrmse,
            range,
            nrmse_range,
            above_threshold: nrmse > threshold,
            degenerate,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------- cross-validation

#[derive(Debug, Clone, Serialize)]
pub struct CrossVal {
    /// R² (regression) or accuracy (classification), one entry per fold.
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

/// Fits the spec on each fold's training rows and scores the held-out rows:
/// R² for regression, accuracy for classification. Folds run in parallel;
/// scores come back in fold order and any training failure aborts the whole
/// evaluation.
pub fn cross_val(
    spec: &ModelSpec,
    data: &SupervisedDataset,
    plan: &FoldPlan,
) -> Result<CrossVal, MetricsError> {
    if plan.n_rows() != data.n_rows() {
        return Err(MetricsError::FoldMismatch {
            rows: data.n_rows(),
            plan: plan.n_rows(),
        });
    }
    let fold_scores = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<f64, MetricsError> {
            let train = data.subset(&plan.train_indices(fold));
            let test = data.subset(&plan.test_indices(fold));
            let model = fit(spec, &train)?;
            Ok(match data.task {
                Task::Regression => {
                    let predictions = model.predict(&test.x)?;
                    r2_score(&test.y, &predictions).0
                }
                Task::Classification => {
                    let predictions = model.predict_classes(&test.x)?;
                    accuracy(&test.classes(), &predictions)
                }
            })
        })
        .collect::<Result<Vec<f64>, MetricsError>>()?;
    let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
    Ok(CrossVal { fold_scores, mean })
}
