//! Ordinary least squares and ridge regression via the centered normal
//! equations (intercept recovered from the means, so it is never penalized).

use serde::{Deserialize, Serialize};

use crate::linalg::{self, LinalgError};
use crate::models::ModelError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct LinearState {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearState, ModelError> {
    let weights = vec![1.0; x.len()];
    let (coefficients, intercept) =
        linalg::weighted_ridge(x, y, &weights, lambda).map_err(|e| match e {
            LinalgError::Singular => ModelError::SingularSystem {
                hint: "feature columns are linearly dependent".to_string(),
            },
            LinalgError::DegenerateWeights => unreachable!("unit weights always sum past zero"),
        })?;
    Ok(LinearState {
        coefficients,
        intercept,
        lambda,
    })
}

pub(crate) fn predict(state: &LinearState, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter()
        .map(|row| {
            state.intercept
                + row
                    .iter()
                    .zip(&state.coefficients)
                    .map(|(v, c)| v * c)
                    .sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_an_exact_linear_relation() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let state = fit(&x, &y, 0.0).unwrap();
        assert!((state.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((state.coefficients[1] + 0.5).abs() < 1e-9);
        assert!((state.intercept - 1.5).abs() < 1e-9);
        let preds = predict(&state, &x);
        for (p, t) in preds.iter().zip(&y) {
            assert!((p - t).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_shrinks_toward_hand_computed_values() {
        // Single feature [0,1,2] -> [0,1,2] with lambda 1: slope 2/3,
        // intercept 1/3.
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![0.0, 1.0, 2.0];
        let state = fit(&x, &y, 1.0).unwrap();
        assert!((state.coefficients[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((state.intercept - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_singular_for_ols_but_not_ridge() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert!(matches!(
            fit(&x, &y, 0.0),
            Err(ModelError::SingularSystem { .. })
        ));
        assert!(fit(&x, &y, 1.0).is_ok());
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_features() {
        let x: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64, ((i * 3) % 5) as f64])
            .collect();
        let y: Vec<f64> = (0..8).map(|i| ((i * 7) % 4) as f64 + 0.25).collect();
        let state = fit(&x, &y, 0.0).unwrap();
        let preds = predict(&state, &x);
        let residuals: Vec<f64> = y.iter().zip(&preds).map(|(t, p)| t - p).collect();
        // Normal equations force zero-sum residuals orthogonal to each column.
        assert!(residuals.iter().sum::<f64>().abs() < 1e-8);
        for j in 0..2 {
            let dot: f64 = residuals.iter().zip(&x).map(|(r, row)| r * row[j]).sum();
            assert!(
                dot.abs() < 1e-8,
                "residuals correlate with feature {j}: {dot}"
            );
        }
    }
}
