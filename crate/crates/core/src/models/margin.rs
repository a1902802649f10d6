//! Maximum-margin linear models trained by projected subgradient descent.
//!
//! This is the Pegasos scheme run full-batch: at epoch `t` the weights are
//! shrunk by `1 - 1/t`, nudged along the averaged subgradient of the margin
//! violations with step `1/(λt)`, then projected back onto the ball
//! `‖w‖ ≤ 1/√λ`, with `λ = 1/(C·n)`. The full-batch pass keeps training
//! fully deterministic — no sampling, no tie to thread order.
//!
//! Classification trains one-vs-rest hinge losses and reports a softmax over
//! the raw margins as its probability estimate; those numbers rank classes
//! correctly but are not calibrated. Regression uses the ε-insensitive loss
//! on mean-centered targets, folding the mean back into the intercept.

use serde::{Deserialize, Serialize};

use crate::dataset::{SupervisedDataset, Task};
use crate::scale::ScalerParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct MarginState {
    /// One weight row per class (classification) or a single row
    /// (regression), in standardized feature space.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub scaler: ScalerParams,
}

pub(crate) fn fit(data: &SupervisedDataset, c: f64, epsilon: f64, epochs: usize) -> MarginState {
    let scaler = ScalerParams::fit(&data.x);
    let xs = scaler.transform(&data.x);
    let n = data.n_rows();
    let lambda = 1.0 / (c * n as f64);

    let (weights, intercepts) = match data.task {
        Task::Classification => {
            let classes = data.classes();
            let mut weights = Vec::with_capacity(data.n_classes);
            let mut intercepts = Vec::with_capacity(data.n_classes);
            for class in 0..data.n_classes {
                let targets: Vec<f64> = classes
                    .iter()
                    .map(|&ci| if ci == class { 1.0 } else { -1.0 })
                    .collect();
                let (w, b) = train_hinge(&xs, &targets, lambda, epochs);
                weights.push(w);
                intercepts.push(b);
            }
            (weights, intercepts)
        }
        Task::Regression => {
            let mean = data.y.iter().sum::<f64>() / n as f64;
            let centered: Vec<f64> = data.y.iter().map(|y| y - mean).collect();
            let (w, b) = train_epsilon(&xs, &centered, epsilon, lambda, epochs);
            (vec![w], vec![b + mean])
        }
    };

    MarginState {
        weights,
        intercepts,
        scaler,
    }
}

/// One-vs-rest hinge: rows with `t·f(x) < 1` are margin violations and
/// contribute `t·x` to the averaged subgradient.
fn train_hinge(xs: &[Vec<f64>], targets: &[f64], lambda: f64, epochs: usize) -> (Vec<f64>, f64) {
    let n = xs.len();
    let d = xs[0].len();
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d];
    let mut b = 0.0;

    for t in 1..=epochs {
        let mut push = vec![0.0; d];
        let mut bias_push = 0.0;
        for (row, &target) in xs.iter().zip(targets) {
            let f = dot(&w, row) + b;
            if target * f < 1.0 {
                for (p, &v) in push.iter_mut().zip(row) {
                    *p += target * v;
                }
                bias_push += target;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        let shrink = 1.0 - 1.0 / t as f64;
        for (wj, pj) in w.iter_mut().zip(&push) {
            *wj = shrink * *wj + eta * pj / n as f64;
        }
        project(&mut w, radius);
        // The bias is not regularized; it follows the averaged violation
        // sign with a plain harmonic step.
        b += bias_push / n as f64 / t as f64;
    }
    (w, b)
}

/// ε-insensitive regression: rows whose residual exceeds the tube
/// contribute `-sign(f - y)·x`.
fn train_epsilon(
    xs: &[Vec<f64>],
    y: &[f64],
    epsilon: f64,
    lambda: f64,
    epochs: usize,
) -> (Vec<f64>, f64) {
    let n = xs.len();
    let d = xs[0].len();
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d];
    let mut b = 0.0;

    for t in 1..=epochs {
        let mut push = vec![0.0; d];
        let mut bias_push = 0.0;
        for (row, &target) in xs.iter().zip(y) {
            let residual = dot(&w, row) + b - target;
            if residual.abs() > epsilon {
                let sign = residual.signum();
                for (p, &v) in push.iter_mut().zip(row) {
                    *p -= sign * v;
                }
                bias_push -= sign;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        let shrink = 1.0 - 1.0 / t as f64;
        for (wj, pj) in w.iter_mut().zip(&push) {
            *wj = shrink * *wj + eta * pj / n as f64;
        }
        project(&mut w, radius);
        b += bias_push / n as f64 / t as f64;
    }
    (w, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(w: &mut [f64], radius: f64) {
    let norm = dot(w, w).sqrt();
    if norm > radius {
        let scale = radius / norm;
        for v in w.iter_mut() {
            *v *= scale;
        }
    }
}

fn margins(state: &MarginState, row: &[f64]) -> Vec<f64> {
    let xs = state.scaler.transform_row(row);
    state
        .weights
        .iter()
        .zip(&state.intercepts)
        .map(|(w, b)| dot(w, &xs) + b)
        .collect()
}

pub(crate) fn predict_values(state: &MarginState, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().map(|row| margins(state, row)[0]).collect()
}

/// Softmax over raw margins — a ranking-preserving score, not a calibrated
/// probability.
pub(crate) fn predict_proba(state: &MarginState, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let m = margins(state, row);
            let max = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = m.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exp.iter().sum();
            exp.iter().map(|e| e / sum).collect()
        })
        .collect()
}
