//! Column standardization shared by the distance- and gradient-based
//! learners and by the clustering step.

use serde::{Deserialize, Serialize};

/// Per-column mean and population standard deviation learned from a
/// training matrix.
///
/// Columns with zero spread are flagged in `constant` and passed through
/// unchanged by [`ScalerParams::transform_row`]; every other column maps to
/// mean 0 and standard deviation 1 on the data it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    /// Population standard deviation (denominator `n`); zero for constant
    /// columns.
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl ScalerParams {
    /// Fits means and population standard deviations column by column.
    /// `rows` must be non-empty and rectangular.
    pub fn fit(rows: &[Vec<f64>]) -> ScalerParams {
        let n = rows.len();
        assert!(n > 0, "cannot fit a scaler on an empty matrix");
        let d = rows[0].len();
        debug_assert!(rows.iter().all(|r| r.len() == d));

        let mut means = vec![0.0; d];
        for row in rows {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }

        let mut stds = vec![0.0; d];
        let mut constant = vec![true; d];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                let delta = v - means[j];
                stds[j] += delta * delta;
                if v != rows[0][j] {
                    constant[j] = false;
                }
            }
        }
        for j in 0..d {
            if constant[j] {
                // All entries identical: accumulated rounding could leave a
                // tiny positive sum, so pin the column explicitly.
                stds[j] = 0.0;
            } else {
                stds[j] = (stds[j] / n as f64).sqrt();
            }
        }
        ScalerParams {
            means,
            stds,
            constant,
        }
    }

    /// Number of columns the scaler was fitted on.
    pub fn width(&self) -> usize {
        self.means.len()
    }

    /// Standardizes one row; constant columns are returned untouched.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        debug_assert_eq!(row.len(), self.width());
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    v
                } else {
                    (v - self.means[j]) / self.stds[j]
                }
            })
            .collect()
    }

    /// Standardizes a whole matrix row by row.
    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}
