//! The model zoo: seven regression and seven classification learners behind
//! one `fit`/`predict` surface.
//!
//! Families and their stand-ins:
//! linear least squares (`ols`), its L2-penalized form (`ridge`), multinomial
//! logistic regression (`logistic`), k-nearest neighbours (`knn`), a CART
//! decision tree (`cart`), a bagged forest of CARTs (`random_forest`), two
//! gradient-boosted-tree presets (`gbt_preset_a`: depth-limited trees,
//! `gbt_preset_b`: leaf-wise trees), and a linear max-margin learner trained
//! by subgradient descent (`linear_margin`). The margin learner plays the
//! SVR/SVC role with an explicitly linear kernel, and the two boosting
//! presets mirror the usual depth-wise versus leaf-wise library defaults;
//! reports emitted downstream restate both substitutions.
//!
//! Classification targets are class integers `0..n_classes`; probabilities
//! always sum to one and class predictions are the argmax with ties to the
//! lowest class.

pub mod forest;
pub mod gbt;
pub mod knn;
pub mod linear;
pub mod logistic;
pub mod margin;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{SupervisedDataset, Task};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model was built for {model} but the data is {data}")]
    TaskMismatch { model: Task, data: Task },
    #[error("{family} does not support {task}")]
    UnsupportedTask { family: Family, task: Task },
    #[error("need at least 2 training rows, got {got}")]
    TooFewRows { got: usize },
    #[error("invalid hyperparameter for {family}: {message}")]
    BadHyper { family: Family, message: String },
    #[error("{family} has no hyperparameter {key:?}")]
    UnknownHyper { family: Family, key: String },
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation requires a {expected} model")]
    WrongTask { expected: Task },
    #[error("normal equations are singular ({hint}); ridge regularization or feature exclusion resolves this")]
    SingularSystem { hint: String },
    #[error("model document has format version {found}, this build reads {expected}")]
    FormatVersion { found: u32, expected: u32 },
    #[error("malformed model document: {0}")]
    Document(String),
}

/// The nine learner families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ols,
    Ridge,
    Logistic,
    Knn,
    Cart,
    RandomForest,
    GbtPresetA,
    GbtPresetB,
    LinearMargin,
}

impl Family {
    pub fn id(self) -> &'static str {
        match self {
            Family::Ols => "ols",
            Family::Ridge => "ridge",
            Family::Logistic => "logistic",
            Family::Knn => "knn",
            Family::Cart => "cart",
            Family::RandomForest => "random_forest",
            Family::GbtPresetA => "gbt_preset_a",
            Family::GbtPresetB => "gbt_preset_b",
            Family::LinearMargin => "linear_margin",
        }
    }

    pub fn parse(text: &str) -> Option<Family> {
        Some(match text.trim() {
            "ols" => Family::Ols,
            "ridge" => Family::Ridge,
            "logistic" => Family::Logistic,
            "knn" => Family::Knn,
            "cart" => Family::Cart,
            "random_forest" => Family::RandomForest,
            "gbt_preset_a" => Family::GbtPresetA,
            "gbt_preset_b" => Family::GbtPresetB,
            "linear_margin" => Family::LinearMargin,
            _ => return None,
        })
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            Family::Ols | Family::Ridge => task == Task::Regression,
            Family::Logistic | Family::Knn => task == Task::Classification,
            _ => true,
        }
    }

    /// The seven families evaluated for a task, in leaderboard order.
    pub fn roster(task: Task) -> Vec<Family> {
        match task {
            Task::Regression => vec![
                Family::Ols,
                Family::Ridge,
                Family::Cart,
                Family::RandomForest,
                Family::GbtPresetA,
                Family::GbtPresetB,
                Family::LinearMargin,
            ],
            Task::Classification => vec![
                Family::Logistic,
                Family::Knn,
                Family::Cart,
                Family::RandomForest,
                Family::GbtPresetA,
                Family::GbtPresetB,
                Family::LinearMargin,
            ],
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// How a forest samples candidate features at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    /// `sqrt(d)` for classification, `d/3` for regression (minimum 1).
    TaskDefault,
    Sqrt,
    Third,
    All,
}

impl FeatureSubset {
    pub(crate) fn size(self, task: Task, d: usize) -> usize {
        let m = match self {
            FeatureSubset::TaskDefault => match task {
                Task::Classification => (d as f64).sqrt().floor() as usize,
                Task::Regression => d / 3,
            },
            FeatureSubset::Sqrt => (d as f64).sqrt().floor() as usize,
            FeatureSubset::Third => d / 3,
            FeatureSubset::All => d,
        };
        m.clamp(1, d)
    }
}

/// Per-family hyperparameters with their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family_kind", rename_all = "snake_case")]
pub enum Hyper {
    Ols,
    Ridge {
        lambda: f64,
    },
    Logistic {
        iterations: usize,
        step: f64,
        l2: f64,
    },
    Knn {
        k: usize,
    },
    Cart {
        min_samples_split: usize,
        /// `None` grows to purity.
        max_depth: Option<usize>,
    },
    Forest {
        trees: usize,
        min_samples_split: usize,
        max_depth: Option<usize>,
        bootstrap: bool,
        feature_subset: FeatureSubset,
    },
    Gbt {
        rounds: usize,
        learning_rate: f64,
        /// Depth-wise growth bound (preset A).
        max_depth: Option<usize>,
        /// Leaf-wise growth bound (preset B).
        max_leaves: Option<usize>,
    },
    Margin {
        c: f64,
        epsilon: f64,
        epochs: usize,
    },
}

/// A config-file override value for one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl HyperValue {
    fn as_f64(&self) -> Option<f64> {
        match *self {
            HyperValue::Int(v) => Some(v as f64),
            HyperValue::Float(v) => Some(v),
            _ => None,
        }
    }

    fn as_usize(&self) -> Option<usize> {
        match *self {
            HyperValue::Int(v) if v >= 0 => Some(v as usize),
            _ => None,
        }
    }

    fn as_bool(&self) -> Option<bool> {
        match *self {
            HyperValue::Bool(v) => Some(v),
            _ => None,
        }
    }
}

impl Hyper {
    pub fn defaults(family: Family) -> Hyper {
        match family {
            Family::Ols => Hyper::Ols,
            Family::Ridge => Hyper::Ridge { lambda: 1.0 },
            Family::Logistic => Hyper::Logistic {
                iterations: 500,
                step: 0.1,
                l2: 1e-4,
            },
            Family::Knn => Hyper::Knn { k: 5 },
            Family::Cart => Hyper::Cart {
                min_samples_split: 2,
                max_depth: None,
            },
            Family::RandomForest => Hyper::Forest {
                trees: 100,
                min_samples_split: 2,
                max_depth: None,
                bootstrap: true,
                feature_subset: FeatureSubset::TaskDefault,
            },
            Family::GbtPresetA => Hyper::Gbt {
                rounds: 100,
                learning_rate: 0.1,
                max_depth: Some(3),
                max_leaves: None,
            },
            Family::GbtPresetB => Hyper::Gbt {
                rounds: 100,
                learning_rate: 0.1,
                max_depth: None,
                max_leaves: Some(31),
            },
            Family::LinearMargin => Hyper::Margin {
                c: 1.0,
                epsilon: 0.1,
                epochs: 1000,
            },
        }
    }

    /// Applies one named override. Depth- and leaf-limits accept 0 for
    /// "unlimited".
    pub fn set(&mut self, family: Family, key: &str, value: &HyperValue) -> Result<(), ModelError> {
        let bad = |message: String| ModelError::BadHyper { family, message };
        let unknown = || ModelError::UnknownHyper {
            family,
            key: key.to_string(),
        };
        let float = |v: &HyperValue| {
            v.as_f64()
                .ok_or_else(|| bad(format!("{key} must be a number")))
        };
        let count = |v: &HyperValue| {
            v.as_usize()
                .ok_or_else(|| bad(format!("{key} must be a non-negative integer")))
        };
        let limit = |v: &HyperValue| -> Result<Option<usize>, ModelError> {
            Ok(match count(v)? {
                0 => None,
                n => Some(n),
            })
        };

        match self {
            Hyper::Ols => return Err(unknown()),
            Hyper::Ridge { lambda } => match key {
                "lambda" => *lambda = float(value)?,
                _ => return Err(unknown()),
            },
            Hyper::Logistic {
                iterations,
                step,
                l2,
            } => match key {
                "iterations" => *iterations = count(value)?,
                "step" => *step = float(value)?,
                "l2" => *l2 = float(value)?,
                _ => return Err(unknown()),
            },
            Hyper::Knn { k } => match key {
                "k" => *k = count(value)?,
                _ => return Err(unknown()),
            },
            Hyper::Cart {
                min_samples_split,
                max_depth,
            } => match key {
                "min_samples_split" => *min_samples_split = count(value)?,
                "max_depth" => *max_depth = limit(value)?,
                _ => return Err(unknown()),
            },
            Hyper::Forest {
                trees,
                min_samples_split,
                max_depth,
                bootstrap,
                feature_subset,
            } => match key {
                "trees" => *trees = count(value)?,
                "min_samples_split" => *min_samples_split = count(value)?,
                "max_depth" => *max_depth = limit(value)?,
                "bootstrap" => {
                    *bootstrap = value
                        .as_bool()
                        .ok_or_else(|| bad("bootstrap must be a boolean".into()))?
                }
                "feature_subset" => {
                    *feature_subset = match value {
                        HyperValue::Text(t) => match t.as_str() {
                            "default" => FeatureSubset::TaskDefault,
                            "sqrt" => FeatureSubset::Sqrt,
                            "third" => FeatureSubset::Third,
                            "all" => FeatureSubset::All,
                            other => {
                                return Err(bad(format!(
                                    "feature_subset {other:?} is not default/sqrt/third/all"
                                )))
                            }
                        },
                        _ => return Err(bad("feature_subset must be a string".into())),
                    }
                }
                _ => return Err(unknown()),
            },
            Hyper::Gbt {
                rounds,
                learning_rate,
                max_depth,
                max_leaves,
            } => match key {
                "rounds" => *rounds = count(value)?,
                "learning_rate" => *learning_rate = float(value)?,
                "max_depth" => *max_depth = limit(value)?,
                "max_leaves" => *max_leaves = limit(value)?,
                _ => return Err(unknown()),
            },
            Hyper::Margin { c, epsilon, epochs } => match key {
                "c" => *c = float(value)?,
                "epsilon" => *epsilon = float(value)?,
                "epochs" => *epochs = count(value)?,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    fn validate(&self, family: Family) -> Result<(), ModelError> {
        let bad = |message: &str| {
            Err(ModelError::BadHyper {
                family,
                message: message.to_string(),
            })
        };
        match *self {
            Hyper::Ols => Ok(()),
            Hyper::Ridge { lambda } => {
                if lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    bad("lambda must be finite and non-negative")
                }
            }
            Hyper::Logistic {
                iterations: _,
                step,
                l2,
            } => {
                if !(step > 0.0 && step.is_finite()) {
                    bad("step must be positive")
                } else if !(l2 >= 0.0 && l2.is_finite()) {
                    bad("l2 must be non-negative")
                } else {
                    Ok(())
                }
            }
            Hyper::Knn { k } => {
                if k >= 1 {
                    Ok(())
                } else {
                    bad("k must be at least 1")
                }
            }
            Hyper::Cart {
                min_samples_split, ..
            } => {
                if min_samples_split >= 2 {
                    Ok(())
                } else {
                    bad("min_samples_split must be at least 2")
                }
            }
            Hyper::Forest {
                trees,
                min_samples_split,
                ..
            } => {
                if trees < 1 {
                    bad("trees must be at least 1")
                } else if min_samples_split < 2 {
                    bad("min_samples_split must be at least 2")
                } else {
                    Ok(())
                }
            }
            Hyper::Gbt {
                rounds,
                learning_rate,
                max_depth,
                max_leaves,
            } => {
                if rounds < 1 {
                    bad("rounds must be at least 1")
                } else if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    bad("learning_rate must be in (0, 1]")
                } else if max_depth.is_none() && max_leaves.is_none() {
                    bad("one of max_depth or max_leaves must bound tree growth")
                } else {
                    Ok(())
                }
            }
            Hyper::Margin { c, epsilon, epochs } => {
                if !(c > 0.0 && c.is_finite()) {
                    bad("c must be positive")
                } else if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    bad("epsilon must be non-negative")
                } else if epochs < 1 {
                    bad("epochs must be at least 1")
                } else {
                    Ok(())
                }
            }
        }
    }

    fn matches(&self, family: Family) -> bool {
        matches!(
            (self, family),
            (Hyper::Ols, Family::Ols)
                | (Hyper::Ridge { .. }, Family::Ridge)
                | (Hyper::Logistic { .. }, Family::Logistic)
                | (Hyper::Knn { .. }, Family::Knn)
                | (Hyper::Cart { .. }, Family::Cart)
                | (Hyper::Forest { .. }, Family::RandomForest)
                | (Hyper::Gbt { .. }, Family::GbtPresetA)
                | (Hyper::Gbt { .. }, Family::GbtPresetB)
                | (Hyper::Margin { .. }, Family::LinearMargin)
        )
    }
}

/// Everything needed to train one model: family, task, hyperparameters, and
/// the seed for any randomized part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub task: Task,
    pub hyper: Hyper,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, task: Task, seed: u64) -> Result<ModelSpec, ModelError> {
        if !family.supports(task) {
            return Err(ModelError::UnsupportedTask { family, task });
        }
        Ok(ModelSpec {
            family,
            task,
            hyper: Hyper::defaults(family),
            seed,
        })
    }

    pub fn name(&self) -> &'static str {
        self.family.id()
    }
}

/// The full evaluation roster for a task.
pub fn zoo(task: Task, seed: u64) -> Vec<ModelSpec> {
    Family::roster(task)
        .into_iter()
        .map(|family| ModelSpec::new(family, task, seed).expect("roster families support the task"))
        .collect()
}

/// Read-only prediction interface, object-safe for the explainability
/// routines. Implementations may assume rows have the right width; the
/// checked entry points live on [`TrainedModel`].
pub trait Predictor: Sync {
    fn task(&self) -> Task;
    fn n_features(&self) -> usize;
    /// Regression values. Only meaningful when `task()` is regression.
    fn values(&self, x: &[Vec<f64>]) -> Vec<f64>;
    /// Class probabilities, one distribution per row, each summing to 1.
    /// Only meaningful when `task()` is classification.
    fn probabilities(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>>;
    /// Class labels: argmax of `probabilities`, ties to the lowest class.
    fn classes(&self, x: &[Vec<f64>]) -> Vec<usize> {
        self.probabilities(x).iter().map(|p| argmax(p)).collect()
    }
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum State {
    Linear(linear::LinearState),
    Logistic(logistic::LogisticState),
    Knn(knn::KnnState),
    Cart { tree: tree::Tree },
    Forest(forest::ForestState),
    Gbt(gbt::GbtState),
    Margin(margin::MarginState),
}

/// A fitted model plus the metadata needed to apply and report it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    /// Band names in class order; empty for regression.
    pub class_names: Vec<String>,
    pub n_classes: usize,
    state: State,
}

/// Trains one model on a supervised frame.
pub fn fit(spec: &ModelSpec, data: &SupervisedDataset) -> Result<TrainedModel, ModelError> {
    if spec.task != data.task {
        return Err(ModelError::TaskMismatch {
            model: spec.task,
            data: data.task,
        });
    }
    if !spec.family.supports(spec.task) {
        return Err(ModelError::UnsupportedTask {
            family: spec.family,
            task: spec.task,
        });
    }
    if !spec.hyper.matches(spec.family) {
        return Err(ModelError::BadHyper {
            family: spec.family,
            message: format!(
                "hyperparameter block belongs to a different family: {:?}",
                spec.hyper
            ),
        });
    }
    if data.n_rows() < 2 {
        return Err(ModelError::TooFewRows { got: data.n_rows() });
    }
    spec.hyper.validate(spec.family)?;

    let state = match (&spec.hyper, spec.family) {
        (Hyper::Ols, _) => State::Linear(linear::fit(&data.x, &data.y, 0.0)?),
        (Hyper::Ridge { lambda }, _) => State::Linear(linear::fit(&data.x, &data.y, *lambda)?),
        (
            Hyper::Logistic {
                iterations,
                step,
                l2,
            },
            _,
        ) => State::Logistic(logistic::fit(
            &data.x,
            &data.classes(),
            data.n_classes,
            *iterations,
            *step,
            *l2,
        )),
        (Hyper::Knn { k }, _) => State::Knn(knn::fit(
            &data.x,
            &data.classes(),
            data.n_classes,
            *k,
            spec.family,
        )?),
        (
            Hyper::Cart {
                min_samples_split,
                max_depth,
            },
            _,
        ) => State::Cart {
            tree: tree::fit_cart(data, *min_samples_split, *max_depth),
        },
        (Hyper::Forest { .. }, _) => State::Forest(forest::fit(data, spec)),
        (Hyper::Gbt { .. }, _) => State::Gbt(gbt::fit(data, &spec.hyper)),
        (Hyper::Margin { c, epsilon, epochs }, _) => {
            State::Margin(margin::fit(data, *c, *epsilon, *epochs))
        }
    };

    Ok(TrainedModel {
        spec: spec.clone(),
        feature_names: data.feature_names.clone(),
        class_names: data.class_names.clone(),
        n_classes: data.n_classes,
        state,
    })
}

impl TrainedModel {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_rows(&self, x: &[Vec<f64>]) -> Result<(), ModelError> {
        for row in x {
            if row.len() != self.n_features() {
                return Err(ModelError::DimensionMismatch {
                    expected: self.n_features(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    /// Predictions: regression values, or class integers as floats for
    /// classification.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        self.check_rows(x)?;
        Ok(match self.spec.task {
            Task::Regression => self.raw_values(x),
            Task::Classification => self.raw_classes(x).into_iter().map(|c| c as f64).collect(),
        })
    }

    /// Class labels; classification models only.
    pub fn predict_classes(&self, x: &[Vec<f64>]) -> Result<Vec<usize>, ModelError> {
        if self.spec.task != Task::Classification {
            return Err(ModelError::WrongTask {
                expected: Task::Classification,
            });
        }
        self.check_rows(x)?;
        Ok(self.raw_classes(x))
    }

    /// Per-class probabilities; classification models only. Every row sums
    /// to 1 (margin-based families are normalized scores, not calibrated
    /// probabilities).
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        if self.spec.task != Task::Classification {
            return Err(ModelError::WrongTask {
                expected: Task::Classification,
            });
        }
        self.check_rows(x)?;
        Ok(self.raw_probabilities(x))
    }

    /// Out-of-bag score when the model is a bootstrapped forest.
    pub fn oob_score(&self) -> Option<f64> {
        match &self.state {
            State::Forest(f) => f.oob_score,
            _ => None,
        }
    }

    /// Per-round training loss when the model is gradient-boosted (entry 0
    /// is the loss of the constant initial fit).
    pub fn training_loss(&self) -> Option<&[f64]> {
        match &self.state {
            State::Gbt(g) => Some(&g.training_loss),
            _ => None,
        }
    }

    fn raw_values(&self, x: &[Vec<f64>]) -> Vec<f64> {
        match &self.state {
            State::Linear(s) => linear::predict(s, x),
            State::Cart { tree } => x.iter().map(|r| tree.predict_value(r)).collect(),
            State::Forest(s) => forest::predict_values(s, x),
            State::Gbt(s) => gbt::predict_values(s, x),
            State::Margin(s) => margin::predict_values(s, x),
            State::Logistic(_) | State::Knn(_) => {
                unreachable!("classification-only families never fit regression")
            }
        }
    }

    fn raw_probabilities(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match &self.state {
            State::Logistic(s) => logistic::predict_proba(s, x),
            State::Knn(s) => knn::predict_proba(s, x),
            State::Cart { tree } => x.iter().map(|r| tree.predict_dist(r).to_vec()).collect(),
            State::Forest(s) => forest::predict_proba(s, x, self.n_classes),
            State::Gbt(s) => gbt::predict_proba(s, x),
            State::Margin(s) => margin::predict_proba(s, x),
            State::Linear(_) => unreachable!("regression-only families never fit classification"),
        }
    }

    fn raw_classes(&self, x: &[Vec<f64>]) -> Vec<usize> {
        self.raw_probabilities(x)
            .iter()
            .map(|p| argmax(p))
            .collect()
    }

    /// Serializes to a versioned JSON document.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Document<'a> {
            format_version: u32,
            model: &'a TrainedModel,
        }
        serde_json::to_string_pretty(&Document {
            format_version: TrainedModel::FORMAT_VERSION,
            model: self,
        })
        .expect("model state serializes")
    }

    /// Loads a document produced by [`TrainedModel::to_json`], refusing
    /// other format versions.
    pub fn from_json(text: &str) -> Result<TrainedModel, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ModelError::Document("missing format_version".into()))?
            as u32;
        if found != TrainedModel::FORMAT_VERSION {
            return Err(ModelError::FormatVersion {
                found,
                expected: TrainedModel::FORMAT_VERSION,
            });
        }
        let model = value
            .get("model")
            .cloned()
            .ok_or_else(|| ModelError::Document("missing model body".into()))?;
        serde_json::from_value(model).map_err(|e| ModelError::Document(e.to_string()))
    }
}

impl Predictor for TrainedModel {
    fn task(&self) -> Task {
        self.spec.task
    }

    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn values(&self, x: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(
            self.spec.task,
            Task::Regression,
            "values() needs a regression model"
        );
        self.raw_values(x)
    }

    fn probabilities(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        assert_eq!(
            self.spec.task,
            Task::Classification,
            "probabilities() needs a classification model"
        );
        self.raw_probabilities(x)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::BandMap;
    use crate::ingest::CountrySeries;
    use crate::synth;
    use chrono::NaiveDate;

    pub(crate) fn toy_series(days: usize) -> Vec<CountrySeries> {
        let start = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let countries = ["Alpha", "Beta", "Gamma"];
        countries
            .iter()
            .enumerate()
            .map(|(c, name)| CountrySeries {
                country: name.to_string(),
                records: (0..days)
                    .map(|d| {
                        let aqi = 1 + ((c * 3 + d * 7) % 10) as u8;
                        synth::clean_record(
                            name,
                            start + chrono::Days::new(d as u64),
                            aqi,
                            (c * 100 + d) as u64,
                        )
                    })
                    .collect(),
            })
            .collect()
    }

    pub(crate) fn toy_dataset(task: Task) -> SupervisedDataset {
        let series = toy_series(30);
        crate::dataset::build_supervised(&series, task, &BandMap::default_daqi(), &[]).unwrap()
    }

    #[test]
    fn family_ids_round_trip() {
        for task in [Task::Regression, Task::Classification] {
            for family in Family::roster(task) {
                assert_eq!(Family::parse(family.id()), Some(family));
                assert!(family.supports(task));
            }
        }
        assert!(!Family::Ols.supports(Task::Classification));
        assert!(!Family::Knn.supports(Task::Regression));
        assert_eq!(Family::parse("svm"), None);
    }

    #[test]
    fn zoo_has_seven_families_per_task() {
        assert_eq!(zoo(Task::Regression, 1).len(), 7);
        assert_eq!(zoo(Task::Classification, 1).len(), 7);
    }

    #[test]
    fn hyper_overrides_apply_and_reject_unknowns() {
        let mut h = Hyper::defaults(Family::RandomForest);
        h.set(Family::RandomForest, "trees", &HyperValue::Int(10))
            .unwrap();
        h.set(Family::RandomForest, "bootstrap", &HyperValue::Bool(false))
            .unwrap();
        h.set(
            Family::RandomForest,
            "feature_subset",
            &HyperValue::Text("all".into()),
        )
        .unwrap();
        match h {
            Hyper::Forest {
                trees,
                bootstrap,
                feature_subset,
                ..
            } => {
                assert_eq!(trees, 10);
                assert!(!bootstrap);
                assert_eq!(feature_subset, FeatureSubset::All);
            }
            _ => unreachable!(),
        }
        assert!(matches!(
            h.set(Family::RandomForest, "gamma", &HyperValue::Int(1)),
            Err(ModelError::UnknownHyper { .. })
        ));
    }

    #[test]
    fn subset_sizes_follow_task_rules() {
        assert_eq!(FeatureSubset::TaskDefault.size(Task::Classification, 20), 4);
        assert_eq!(FeatureSubset::TaskDefault.size(Task::Regression, 19), 6);
        assert_eq!(FeatureSubset::TaskDefault.size(Task::Regression, 2), 1); // floor clamps up to 1
        assert_eq!(FeatureSubset::All.size(Task::Regression, 19), 19);
    }

    #[test]
    fn fit_rejects_task_mismatches() {
        let data = toy_dataset(Task::Regression);
        let spec = ModelSpec::new(Family::Logistic, Task::Classification, 1).unwrap();
        assert!(matches!(
            fit(&spec, &data),
            Err(ModelError::TaskMismatch { .. })
        ));
        assert!(matches!(
            ModelSpec::new(Family::Ols, Task::Classification, 1),
            Err(ModelError::UnsupportedTask { .. })
        ));
    }

    #[test]
    fn every_family_fits_predicts_and_round_trips() {
        for task in [Task::Regression, Task::Classification] {
            let data = toy_dataset(task);
            for mut spec in zoo(task, 42) {
                // Shrink the expensive ensembles; behaviour is identical in kind.
                match spec.family {
                    Family::RandomForest => spec
                        .hyper
                        .set(spec.family, "trees", &HyperValue::Int(15))
                        .unwrap(),
                    Family::GbtPresetA | Family::GbtPresetB => spec
                        .hyper
                        .set(spec.family, "rounds", &HyperValue::Int(15))
                        .unwrap(),
                    Family::LinearMargin => spec
                        .hyper
                        .set(spec.family, "epochs", &HyperValue::Int(50))
                        .unwrap(),
                    _ => {}
                }
                let model = fit(&spec, &data)
                    .unwrap_or_else(|e| panic!("{} failed to fit on {task}: {e}", spec.name()));
                let preds = model.predict(&data.x).unwrap();
                assert_eq!(preds.len(), data.n_rows());
                assert!(preds.iter().all(|p| p.is_finite()));

                if task == Task::Classification {
                    let proba = model.predict_proba(&data.x).unwrap();
                    for (row, p) in proba.iter().enumerate() {
                        assert_eq!(p.len(), data.n_classes);
                        let sum: f64 = p.iter().sum();
                        assert!(
                            (sum - 1.0).abs() < 1e-9,
                            "{} row {row} probabilities sum to {sum}",
                            spec.name()
                        );
                        assert!(p.iter().all(|&v| v >= 0.0));
                    }
                    // Class predictions agree with argmax of probabilities.
                    let classes = model.predict_classes(&data.x).unwrap();
                    for (c, p) in classes.iter().zip(&proba) {
                        assert_eq!(*c, argmax(p));
                    }
                } else {
                    assert!(matches!(
                        model.predict_proba(&data.x),
                        Err(ModelError::WrongTask { .. })
                    ));
                }

                // Serialized round trip reproduces predictions exactly.
                let json = model.to_json();
                let loaded = TrainedModel::from_json(&json).unwrap();
                assert_eq!(
                    loaded.predict(&data.x).unwrap(),
                    preds,
                    "{} round trip drifted",
                    spec.name()
                );
            }
        }
    }

    #[test]
    fn refitting_is_deterministic() {
        let data = toy_dataset(Task::Classification);
        let mut spec = ModelSpec::new(Family::RandomForest, Task::Classification, 9).unwrap();
        spec.hyper
            .set(spec.family, "trees", &HyperValue::Int(12))
            .unwrap();
        let a = fit(&spec, &data).unwrap();
        let b = fit(&spec, &data).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        // A different seed gives a genuinely different ensemble.
        let mut spec2 = spec.clone();
        spec2.seed = 10;
        let c = fit(&spec2, &data).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn format_version_is_enforced() {
        let data = toy_dataset(Task::Regression);
        let spec = ModelSpec::new(Family::Ridge, Task::Regression, 1).unwrap();
        let model = fit(&spec, &data).unwrap();
        let json = model
            .to_json()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            TrainedModel::from_json(&json),
            Err(ModelError::FormatVersion { found: 2, .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let data = toy_dataset(Task::Regression);
        let spec = ModelSpec::new(Family::Cart, Task::Regression, 1).unwrap();
        let model = fit(&spec, &data).unwrap();
        let short = vec![vec![0.0; 3]];
        assert!(matches!(
            model.predict(&short),
            Err(ModelError::DimensionMismatch {
                expected: 19,
                got: 3
            })
        ));
    }
}
