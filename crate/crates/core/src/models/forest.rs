//! Random forest: bootstrap-bagged CARTs with per-node feature sampling.
//!
//! Tree `t` draws its bootstrap sample and node feature subsets from a
//! generator seeded with `seed + t`, so the ensemble is reproducible and
//! independent of how many threads build it. Regression averages tree
//! values; classification lets each tree vote and reports vote fractions.
//! Rows a tree never saw (out-of-bag) give a free generalization estimate,
//! reported but never used for training decisions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SupervisedDataset, Task};
use crate::metrics;
use crate::models::tree::{grow, GrowControl, SplitTargets, Tree};
use crate::models::{argmax, Hyper, ModelSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ForestState {
    pub trees: Vec<Tree>,
    /// Accuracy (classification) or R² (regression) over rows with at least
    /// one out-of-bag tree; absent when bootstrapping is off.
    pub oob_score: Option<f64>,
    /// Features sampled per node.
    pub m_features: usize,
}

pub(crate) fn fit(data: &SupervisedDataset, spec: &ModelSpec) -> ForestState {
    let Hyper::Forest {
        trees: n_trees,
        min_samples_split,
        max_depth,
        bootstrap,
        feature_subset,
    } = spec.hyper
    else {
        unreachable!("forest fit dispatched with non-forest hyperparameters")
    };

    let n = data.n_rows();
    let d = data.n_features();
    let m = feature_subset.size(spec.task, d);
    let classes = match data.task {
        Task::Classification => data.classes(),
        Task::Regression => Vec::new(),
    };
    let targets = || match data.task {
        Task::Regression => SplitTargets::Variance(&data.y),
        Task::Classification => SplitTargets::Gini {
            classes: &classes,
            n_classes: data.n_classes,
        },
    };
    let control = GrowControl {
        min_samples_split,
        max_depth,
        max_leaves: None,
        feature_subset: if m < d { Some(m) } else { None },
    };

    // Each tree is fully determined by its own generator, so the parallel
    // build keeps byte-for-byte determinism.
    let grown: Vec<(Tree, Vec<bool>)> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(t as u64));
            let mut in_bag = vec![false; n];
            let idx: Vec<usize> = if bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                in_bag.fill(true);
                (0..n).collect()
            };
            let tree = grow(&data.x, idx, targets(), &control, Some(&mut rng));
            (tree, in_bag)
        })
        .collect();

    let oob_score = oob_score(data, &grown);
    ForestState {
        trees: grown.into_iter().map(|(tree, _)| tree).collect(),
        oob_score,
        m_features: m,
    }
}

/// Aggregates each row's out-of-bag trees and scores the result; `None` when
/// no row was ever left out.
fn oob_score(data: &SupervisedDataset, grown: &[(Tree, Vec<bool>)]) -> Option<f64> {
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for (i, row) in data.x.iter().enumerate() {
        let outside: Vec<&Tree> = grown
            .iter()
            .filter(|(_, in_bag)| !in_bag[i])
            .map(|(tree, _)| tree)
            .collect();
        if outside.is_empty() {
            continue;
        }
        let prediction = match data.task {
            Task::Regression => {
                outside.iter().map(|t| t.predict_value(row)).sum::<f64>() / outside.len() as f64
            }
            Task::Classification => {
                let mut votes = vec![0.0; data.n_classes];
                for t in &outside {
                    votes[argmax(t.predict_dist(row))] += 1.0;
                }
                argmax(&votes) as f64
            }
        };
        y_true.push(data.y[i]);
        y_pred.push(prediction);
    }
    if y_true.is_empty() {
        return None;
    }
    Some(match data.task {
        Task::Regression => metrics::r2_score(&y_true, &y_pred).0,
        Task::Classification => {
            let matches = y_true.iter().zip(&y_pred).filter(|(t, p)| t == p).count();
            matches as f64 / y_true.len() as f64
        }
    })
}

pub(crate) fn predict_values(state: &ForestState, x: &[Vec<f64>]) -> Vec<f64> {
    x.par_iter()
        .map(|row| {
            state
                .trees
                .iter()
                .map(|t| t.predict_value(row))
                .sum::<f64>()
                / state.trees.len() as f64
        })
        .collect()
}

/// Vote fractions: each tree casts one vote for its leaf-majority class, so
/// the argmax of these probabilities is exactly the majority vote (ties to
/// the lowest class).
pub(crate) fn predict_proba(
    state: &ForestState,
    x: &[Vec<f64>],
    n_classes: usize,
) -> Vec<Vec<f64>> {
    x.par_iter()
        .map(|row| {
            let mut votes = vec![0.0; n_classes];
            for t in &state.trees {
                votes[argmax(t.predict_dist(row))] += 1.0;
            }
            for v in &mut votes {
                *v /= state.trees.len() as f64;
            }
            votes
        })
        .collect()
}
