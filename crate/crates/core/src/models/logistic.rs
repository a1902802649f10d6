//! Multinomial logistic regression trained by full-batch gradient descent
//! on standardized features.
//!
//! Weights start at zero (so zero iterations predict the uniform
//! distribution) and descend the L2-penalized mean cross-entropy; the
//! intercepts are not penalized. [`log_loss`] and [`gradients`] are public
//! so the gradient can be checked against finite differences.

use serde::{Deserialize, Serialize};

use crate::scale::ScalerParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct LogisticState {
    /// One weight row per class.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub scaler: ScalerParams,
}

/// Row-wise softmax of class scores.
fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn class_scores(weights: &[Vec<f64>], intercepts: &[f64], row: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(intercepts)
        .map(|(w, b)| b + w.iter().zip(row).map(|(wj, xj)| wj * xj).sum::<f64>())
        .collect()
}

/// Mean cross-entropy plus `l2/2 * ||weights||^2` (intercepts unpenalized).
/// `x` is taken as already standardized.
pub fn log_loss(
    weights: &[Vec<f64>],
    intercepts: &[f64],
    x: &[Vec<f64>],
    classes: &[usize],
    l2: f64,
) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (row, &class) in x.iter().zip(classes) {
        let proba = softmax(&class_scores(weights, intercepts, row));
        loss -= proba[class].max(1e-300).ln();
    }
    let penalty: f64 = weights.iter().flat_map(|w| w.iter()).map(|w| w * w).sum();
    loss / n + 0.5 * l2 * penalty
}

/// Analytic gradient of [`log_loss`] with respect to weights and intercepts.
pub fn gradients(
    weights: &[Vec<f64>],
    intercepts: &[f64],
    x: &[Vec<f64>],
    classes: &[usize],
    l2: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = weights.len();
    let d = weights[0].len();
    let n = x.len() as f64;
    let mut grad_w = vec![vec![0.0; d]; k];
    let mut grad_b = vec![0.0; k];
    for (row, &class) in x.iter().zip(classes) {
        let proba = softmax(&class_scores(weights, intercepts, row));
        for c in 0..k {
            let delta = proba[c] - if c == class { 1.0 } else { 0.0 };
            grad_b[c] += delta;
            for (g, &xj) in grad_w[c].iter_mut().zip(row) {
                *g += delta * xj;
            }
        }
    }
    for c in 0..k {
        grad_b[c] /= n;
        for (g, &w) in grad_w[c].iter_mut().zip(&weights[c]) {
            *g = *g / n + l2 * w;
        }
    }
    (grad_w, grad_b)
}

pub(crate) fn fit(
    x: &[Vec<f64>],
    classes: &[usize],
    n_classes: usize,
    iterations: usize,
    step: f64,
    l2: f64,
) -> LogisticState {
    let scaler = ScalerParams::fit(x);
    let scaled = scaler.transform(x);
    let d = scaler.width();
    let mut weights = vec![vec![0.0; d]; n_classes];
    let mut intercepts = vec![0.0; n_classes];

    for _ in 0..iterations {
        let (grad_w, grad_b) = gradients(&weights, &intercepts, &scaled, classes, l2);
        for c in 0..n_classes {
            intercepts[c] -= step * grad_b[c];
            for (w, g) in weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= step * g;
            }
        }
    }
    LogisticState {
        weights,
        intercepts,
        scaler,
    }
}

pub(crate) fn predict_proba(state: &LogisticState, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let scaled = state.scaler.transform_row(row);
            softmax(&class_scores(&state.weights, &state.intercepts, &scaled))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<usize>) {
        // Two separated blobs along the first axis.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            x.push(vec![-2.0 - 0.1 * i as f64, 0.3 * (i % 3) as f64]);
            y.push(0);
            x.push(vec![2.0 + 0.1 * i as f64, 0.3 * ((i + 1) % 3) as f64]);
            y.push(1);
        }
        (x, y)
    }

    #[test]
    fn zero_iterations_predict_uniform() {
        let (x, y) = toy();
        let state = fit(&x, &y, 2, 0, 0.1, 1e-4);
        let proba = predict_proba(&state, &x);
        for p in proba {
            assert!((p[0] - 0.5).abs() < 1e-12);
            assert!((p[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn training_descends_the_loss_and_separates_blobs() {
        let (x, y) = toy();
        let scaler = ScalerParams::fit(&x);
        let scaled = scaler.transform(&x);

        let state = fit(&x, &y, 2, 200, 0.1, 1e-4);
        let initial = log_loss(&vec![vec![0.0; 2]; 2], &[0.0, 0.0], &scaled, &y, 1e-4);
        let trained = log_loss(&state.weights, &state.intercepts, &scaled, &y, 1e-4);
        assert!(
            trained < initial,
            "loss did not decrease: {trained} >= {initial}"
        );

        let proba = predict_proba(&state, &x);
        for (p, &class) in proba.iter().zip(&y) {
            assert!(p[class] > 0.9, "poorly separated: {p:?} for class {class}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = vec![
            vec![0.2, -1.1, 0.4],
            vec![-0.7, 0.3, 1.2],
            vec![1.5, 0.8, -0.6],
            vec![-0.2, -0.4, 0.1],
        ];
        let classes = vec![0usize, 2, 1, 2];
        let weights = vec![
            vec![0.1, -0.2, 0.3],
            vec![-0.4, 0.5, 0.05],
            vec![0.2, 0.1, -0.3],
        ];
        let intercepts = vec![0.05, -0.1, 0.2];
        let l2 = 0.01;
        let (grad_w, grad_b) = gradients(&weights, &intercepts, &x, &classes, l2);

        let eps = 1e-6;
        for c in 0..3 {
            for j in 0..3 {
                let mut plus = weights.clone();
                plus[c][j] += eps;
                let mut minus = weights.clone();
                minus[c][j] -= eps;
                let numeric = (log_loss(&plus, &intercepts, &x, &classes, l2)
                    - log_loss(&minus, &intercepts, &x, &classes, l2))
                    / (2.0 * eps);
                assert!(
                    (numeric - grad_w[c][j]).abs() < 1e-6,
                    "dW[{c}][{j}]: numeric {numeric} vs analytic {}",
                    grad_w[c][j]
                );
            }
            let mut plus = intercepts.clone();
            plus[c] += eps;
            let mut minus = intercepts.clone();
            minus[c] -= eps;
            let numeric = (log_loss(&weights, &plus, &x, &classes, l2)
                - log_loss(&weights, &minus, &x, &classes, l2))
                / (2.0 * eps);
            assert!((numeric - grad_b[c]).abs() < 1e-6);
        }
    }
}
