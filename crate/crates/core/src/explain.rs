//! Model-agnostic explanations: permutation importance, local surrogate
//! models (LIME), and partial dependence curves.
//!
//! Everything here works through the [`Predictor`] trait, so any trained
//! model — or a test stub — can be explained. All sampling uses seeded
//! generators, and repeated runs with the same seed reproduce the same
//! numbers bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::Task;
use crate::linalg::{weighted_ridge, LinalgError};
use crate::metrics::r2_score;
use crate::models::Predictor;
use crate::scale::ScalerParams;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("explanations need at least one row")]
    Empty,
    #[error("feature index {feature} out of range for {n_features} features")]
    BadFeature { feature: usize, n_features: usize },
    #[error("instance has {got} features but the model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {0} out of range for this model")]
    BadClass(usize),
    #[error("{0}")]
    BadConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Held-out score in the model's own terms: R² for regression, accuracy for
/// classification (`y` then holds class integers as floats).
fn score(model: &dyn Predictor, x: &[Vec<f64>], y: &[f64]) -> f64 {
    match model.task() {
        Task::Regression => r2_score(y, &model.values(x)).0,
        Task::Classification => {
            let hits = model
                .classes(x)
                .iter()
                .zip(y)
                .filter(|(&c, &t)| c as f64 == t)
                .count();
            hits as f64 / y.len() as f64
        }
    }
}

// ----------------------------------------------------- permutation importance

#[derive(Debug, Clone, Serialize)]
pub struct ImportanceRow {
    pub feature: usize,
    pub name: String,
    /// Mean score drop across repeats when this column is shuffled.
    pub mean_drop: f64,
    /// Spread of the drop across repeats (population standard deviation).
    pub std_drop: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportanceTable {
    /// Score on the unshuffled data.
    pub baseline: f64,
    pub repeats: usize,
    /// Sorted by `mean_drop` descending; ties keep feature order.
    pub rows: Vec<ImportanceRow>,
}

/// Shuffles one column at a time and measures how much the model's score
/// drops. Each (feature, repeat) pair derives its own generator from `seed`,
/// so results do not depend on scheduling.
pub fn permutation_importance(
    model: &dyn Predictor,
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceTable, ExplainError> {
    if x.is_empty() {
        return Err(ExplainError::Empty);
    }
    if y.len() != x.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let d = model.n_features();
    if feature_names.len() != d || x[0].len() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: x[0].len(),
        });
    }
    if repeats == 0 {
        return Err(ExplainError::BadConfig("repeats must be at least 1".into()));
    }

    let baseline = score(model, x, y);
    let mut rows: Vec<ImportanceRow> = (0..d)
        .into_par_iter()
        .map(|feature| {
            let mut shuffled = x.to_vec();
            let drops: Vec<f64> = (0..repeats)
                .map(|repeat| {
                    let mut rng = derived_rng(seed, feature * repeats + repeat);
                    let mut column: Vec<f64> = x.iter().map(|row| row[feature]).collect();
                    shuffle(&mut column, &mut rng);
                    for (row, v) in shuffled.iter_mut().zip(column) {
                        row[feature] = v;
                    }
                    baseline - score(model, &shuffled, y)
                })
                .collect();
            let mean = drops.iter().sum::<f64>() / repeats as f64;
            let var = drops.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / repeats as f64;
            ImportanceRow {
                feature,
                name: feature_names[feature].clone(),
                mean_drop: mean,
                std_drop: var.sqrt(),
            }
        })
        .collect();

    rows.sort_by(|a, b| {
        b.mean_drop
            .total_cmp(&a.mean_drop)
            .then(a.feature.cmp(&b.feature))
    });
    Ok(ImportanceTable {
        baseline,
        repeats,
        rows,
    })
}

/// Generator for one (feature, repeat) slot: a golden-ratio stride keeps the
/// streams well separated without coupling them to execution order.
fn derived_rng(seed: u64, slot: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_add((slot as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

fn shuffle(values: &mut [f64], rng: &mut ChaCha8Rng) {
    for i in (1..values.len()).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
}

// ------------------------------------------------------------------- LIME

#[derive(Debug, Clone)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Kernel width in standardized units; `None` means `0.75·√d`.
    pub kernel_width: Option<f64>,
    pub seed: u64,
    /// Class whose probability the surrogate explains; `None` means the
    /// model's own prediction at the instance. Ignored for regression.
    pub target_class: Option<usize>,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 5000,
            kernel_width: None,
            seed: 0,
            target_class: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimeExplanation {
    /// Explained class for classification models; absent for regression.
    pub target_class: Option<usize>,
    pub kernel_width: f64,
    pub n_samples: usize,
    /// Surrogate coefficients on raw feature scales, one per feature.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Surrogate prediction at the instance.
    pub local_prediction: f64,
    /// The model's own response at the instance.
    pub model_prediction: f64,
}

/// Fits a weighted ridge surrogate around one instance. Perturbations are
/// Gaussian per feature, scaled by the training standard deviations, and
/// sample weights decay with standardized distance via
/// `exp(−d²/width²)`. Constant training features are never perturbed and get
/// weight 0.
pub fn lime_explain(
    model: &dyn Predictor,
    instance: &[f64],
    scaler: &ScalerParams,
    config: &LimeConfig,
) -> Result<LimeExplanation, ExplainError> {
    let d = model.n_features();
    if instance.len() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: instance.len(),
        });
    }
    if scaler.width() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: scaler.width(),
        });
    }
    if config.n_samples < 2 {
        return Err(ExplainError::BadConfig(
            "lime needs at least two samples".into(),
        ));
    }
    let kernel_width = config
        .kernel_width
        .unwrap_or_else(|| 0.75 * (d as f64).sqrt());
    if kernel_width <= 0.0 {
        return Err(ExplainError::BadConfig(
            "kernel width must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.n_samples);
    let mut kernel = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let mut row = Vec::with_capacity(d);
        let mut dist_sq = 0.0;
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            if scaler.constant[j] {
                row.push(instance[j]);
            } else {
                row.push(instance[j] + scaler.stds[j] * z);
                dist_sq += z * z;
            }
        }
        samples.push(row);
        kernel.push((-dist_sq / (kernel_width * kernel_width)).exp());
    }

    let target_class = match model.task() {
        Task::Regression => None,
        Task::Classification => {
            let class = match config.target_class {
                Some(c) => c,
                None => model.classes(std::slice::from_ref(&instance.to_vec()))[0],
            };
            Some(class)
        }
    };
    let responses = response(model, &samples, target_class)?;
    let model_prediction = response(
        model,
        std::slice::from_ref(&instance.to_vec()),
        target_class,
    )?[0];

    let (mut weights, intercept) = weighted_ridge(&samples, &responses, &kernel, 1.0)?;
    // Unperturbed columns carry no local information; pin them to exactly 0
    // rather than leaving elimination residue.
    for (w, &fixed) in weights.iter_mut().zip(&scaler.constant) {
        if fixed {
            *w = 0.0;
        }
    }
    let local_prediction = intercept
        + weights
            .iter()
            .zip(instance)
            .map(|(w, v)| w * v)
            .sum::<f64>();
    Ok(LimeExplanation {
        target_class,
        kernel_width,
        n_samples: config.n_samples,
        weights,
        intercept,
        local_prediction,
        model_prediction,
    })
}

fn response(
    model: &dyn Predictor,
    x: &[Vec<f64>],
    target_class: Option<usize>,
) -> Result<Vec<f64>, ExplainError> {
    match model.task() {
        Task::Regression => Ok(model.values(x)),
        Task::Classification => {
            let class = target_class.expect("classification always sets a target class");
            let proba = model.probabilities(x);
            if class >= proba[0].len() {
                return Err(ExplainError::BadClass(class));
            }
            Ok(proba.iter().map(|p| p[class]).collect())
        }
    }
}

// -------------------------------------------------------- partial dependence

#[derive(Debug, Clone, Serialize)]
pub struct PdpCurve {
    pub feature: usize,
    /// Deduplicated empirical quantiles of the feature column.
    pub grid: Vec<f64>,
    /// One entry per grid value: `[mean prediction]` for regression, mean
    /// probability per class for classification.
    pub values: Vec<Vec<f64>>,
    /// True when the column was constant and the grid collapsed to one
    /// point.
    pub single_point: bool,
}

/// Sweeps one feature over quantiles of its observed values — evenly spaced
/// levels from 0.05 to 0.95, linearly interpolated — and averages the
/// model's predictions with that column pinned to each grid value.
pub fn pdp(
    model: &dyn Predictor,
    x: &[Vec<f64>],
    feature: usize,
    n_grid: usize,
) -> Result<PdpCurve, ExplainError> {
    if x.is_empty() {
        return Err(ExplainError::Empty);
    }
    let d = model.n_features();
    if feature >= d {
        return Err(ExplainError::BadFeature {
            feature,
            n_features: d,
        });
    }
    if n_grid < 2 {
        return Err(ExplainError::BadConfig(
            "the grid needs at least two quantile levels".into(),
        ));
    }

    let mut column: Vec<f64> = x.iter().map(|row| row[feature]).collect();
    column.sort_by(f64::total_cmp);
    let mut grid = Vec::with_capacity(n_grid);
    for i in 0..n_grid {
        let level = 0.05 + 0.90 * i as f64 / (n_grid - 1) as f64;
        let value = quantile(&column, level);
        if grid.last() != Some(&value) {
            grid.push(value);
        }
    }
    let single_point = grid.len() == 1;

    let mut pinned = x.to_vec();
    let values = grid
        .iter()
        .map(|&g| {
            for row in pinned.iter_mut() {
                row[feature] = g;
            }
            match model.task() {
                Task::Regression => {
                    let predictions = model.values(&pinned);
                    vec![predictions.iter().sum::<f64>() / predictions.len() as f64]
                }
                Task::Classification => {
                    let proba = model.probabilities(&pinned);
                    let k = proba[0].len();
                    let mut mean = vec![0.0; k];
                    for p in &proba {
                        for (m, v) in mean.iter_mut().zip(p) {
                            *m += v;
                        }
                    }
                    for m in &mut mean {
                        *m /= proba.len() as f64;
                    }
                    mean
                }
            }
        })
        .collect();

    Ok(PdpCurve {
        feature,
        grid,
        values,
        single_point,
    })
}

/// Linear-interpolated empirical quantile of a sorted slice.
fn quantile(sorted: &[f64], level: f64) -> f64 {
    let position = level * (sorted.len() - 1) as f64;
    let low = position.floor() as usize;
    let high = position.ceil() as usize;
    let fraction = position - low as f64;
    sorted[low] + fraction * (sorted[high] - sorted[low])
}
