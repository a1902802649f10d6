//! Gradient boosting with mean-residual leaves.
//!
//! Regression starts from the target mean and repeatedly fits a small tree
//! to the current residuals; classification starts from log class priors and
//! fits one tree per class to the softmax residuals (one-hot minus predicted
//! probability). Leaves hold the mean residual of their rows and every
//! contribution is shrunk by the learning rate before it joins the score.
//! With that leaf rule the training loss can be shown to never increase at
//! the configured rates, and `training_loss` records the full trace (initial
//! loss first) so callers can verify it.
//!
//! Tree shape comes from the hyperparameters: a depth cap grows depth-wise,
//! a leaf budget grows best-first, mirroring the two boosting presets.

use serde::{Deserialize, Serialize};

use crate::dataset::{SupervisedDataset, Task};
use crate::models::tree::{grow, GrowControl, SplitTargets, Tree};
use crate::models::Hyper;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct GbtState {
    /// Initial score per output: `[mean]` for regression, log priors for
    /// classification.
    pub base: Vec<f64>,
    /// `trees[round][output]`; regression has one output.
    pub trees: Vec<Vec<Tree>>,
    pub learning_rate: f64,
    /// Training loss before boosting and after each round: MSE for
    /// regression, mean cross-entropy for classification.
    pub training_loss: Vec<f64>,
}

pub(crate) fn fit(data: &SupervisedDataset, hyper: &Hyper) -> GbtState {
    let Hyper::Gbt {
        rounds,
        learning_rate,
        max_depth,
        max_leaves,
    } = *hyper
    else {
        unreachable!("boosting fit dispatched with non-boosting hyperparameters")
    };
    let control = GrowControl {
        min_samples_split: 2,
        max_depth,
        max_leaves,
        feature_subset: None,
    };
    match data.task {
        Task::Regression => fit_regression(data, rounds, learning_rate, &control),
        Task::Classification => fit_classification(data, rounds, learning_rate, &control),
    }
}

fn fit_regression(
    data: &SupervisedDataset,
    rounds: usize,
    learning_rate: f64,
    control: &GrowControl,
) -> GbtState {
    let n = data.n_rows();
    let base = data.y.iter().sum::<f64>() / n as f64;
    let mut scores = vec![base; n];
    let mut trees = Vec::with_capacity(rounds);
    let mut training_loss = vec![mse(&data.y, &scores)];

    for _ in 0..rounds {
        // Always the full schedule: once residuals are exhausted the grower
        // returns zero-valued stumps, so extra rounds are harmless and every
        // model with the same schedule has the same shape.
        let residuals: Vec<f64> = data.y.iter().zip(&scores).map(|(y, s)| y - s).collect();
        let tree = grow(
            &data.x,
            (0..n).collect(),
            SplitTargets::Variance(&residuals),
            control,
            None,
        );
        for (s, row) in scores.iter_mut().zip(&data.x) {
            *s += learning_rate * tree.predict_value(row);
        }
        training_loss.push(mse(&data.y, &scores));
        trees.push(vec![tree]);
    }

    GbtState {
        base: vec![base],
        trees,
        learning_rate,
        training_loss,
    }
}

fn fit_classification(
    data: &SupervisedDataset,
    rounds: usize,
    learning_rate: f64,
    control: &GrowControl,
) -> GbtState {
    let n = data.n_rows();
    let k = data.n_classes;
    let classes = data.classes();

    let mut counts = vec![0usize; k];
    for &c in &classes {
        counts[c] += 1;
    }
    let base: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).max(1e-12).ln())
        .collect();

    // scores[class][row]
    let mut scores: Vec<Vec<f64>> = base.iter().map(|&b| vec![b; n]).collect();
    let mut trees = Vec::with_capacity(rounds);
    let mut training_loss = vec![cross_entropy(&scores, &classes)];

    for _ in 0..rounds {
        // Probabilities are snapshotted once per round; all K trees of the
        // round fit residuals of the same snapshot.
        let proba = softmax_columns(&scores);
        let mut round_trees = Vec::with_capacity(k);
        for class in 0..k {
            let residuals: Vec<f64> = (0..n)
                .map(|i| {
                    let target = if classes[i] == class { 1.0 } else { 0.0 };
                    target - proba[i][class]
                })
                .collect();
            let tree = grow(
                &data.x,
                (0..n).collect(),
                SplitTargets::Variance(&residuals),
                control,
                None,
            );
            for (s, row) in scores[class].iter_mut().zip(&data.x) {
                *s += learning_rate * tree.predict_value(row);
            }
            round_trees.push(tree);
        }
        training_loss.push(cross_entropy(&scores, &classes));
        trees.push(round_trees);
    }

    GbtState {
        base,
        trees,
        learning_rate,
        training_loss,
    }
}

fn mse(y: &[f64], scores: &[f64]) -> f64 {
    y.iter()
        .zip(scores)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

/// Mean negative log-likelihood of the true classes under softmax scores.
fn cross_entropy(scores: &[Vec<f64>], classes: &[usize]) -> f64 {
    let n = classes.len();
    let mut total = 0.0;
    for i in 0..n {
        let row: Vec<f64> = scores.iter().map(|col| col[i]).collect();
        let p = softmax(&row);
        total -= p[classes[i]].max(1e-12).ln();
    }
    total / n as f64
}

/// Transposes `scores[class][row]` into per-row probability vectors.
fn softmax_columns(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = scores[0].len();
    (0..n)
        .map(|i| {
            let row: Vec<f64> = scores.iter().map(|col| col[i]).collect();
            softmax(&row)
        })
        .collect()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.iter().map(|e| e / sum).collect()
}

pub(crate) fn predict_values(state: &GbtState, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter()
        .map(|row| {
            state.base[0]
                + state.learning_rate
                    * state
                        .trees
                        .iter()
                        .map(|round| round[0].predict_value(row))
                        .sum::<f64>()
        })
        .collect()
}

pub(crate) fn predict_proba(state: &GbtState, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = state.base.len();
    x.iter()
        .map(|row| {
            let mut margins = state.base.clone();
            for round in &state.trees {
                for (class, tree) in round.iter().enumerate().take(k) {
                    margins[class] += state.learning_rate * tree.predict_value(row);
                }
            }
            softmax(&margins)
        })
        .collect()
}
