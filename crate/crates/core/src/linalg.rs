//! Small dense linear-algebra kernels backing the linear learners and the
//! local surrogate in [`crate::explain`].
//!
//! The systems solved here are tiny (at most a few dozen unknowns), so a
//! plain Gaussian elimination with partial pivoting is both sufficient and
//! easy to audit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    /// The coefficient matrix has no usable pivot; for normal equations this
    /// means collinear feature columns.
    #[error("matrix is singular to working precision")]
    Singular,
    /// Every sample weight is zero (or negative weights outweigh positive
    /// ones), so weighted moments are undefined.
    #[error("sample weights sum to zero")]
    DegenerateWeights,
}

/// Solves `a * x = b` in place by Gaussian elimination with partial
/// pivoting. `a` must be square with `b.len()` rows.
///
/// A pivot whose magnitude falls below `1e-12` times the largest entry of
/// the original matrix is treated as zero and reported as
/// [`LinalgError::Singular`].
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, LinalgError> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    if n == 0 {
        return Ok(Vec::new());
    }

    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = if scale > 0.0 { scale * 1e-12 } else { 1e-12 };

    for col in 0..n {
        // Partial pivoting: bring the largest remaining entry of this column
        // onto the diagonal.
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty pivot range");
        if a[pivot_row][col].abs() <= tol {
            return Err(LinalgError::Singular);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);

        let pivot = a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            let (head, tail) = a.split_at_mut(row);
            let pivot_tail = &head[col][col + 1..];
            let current = &mut tail[0];
            current[col] = 0.0;
            for (entry, &p) in current[col + 1..].iter_mut().zip(pivot_tail) {
                *entry -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }

    // Back substitution.
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Fits a weighted ridge regression with an unpenalized intercept.
///
/// Solves `(Xc' W Xc + lambda * I) beta = Xc' W yc` where `Xc`/`yc` are
/// centered at the weighted means, then recovers the intercept as
/// `mean(y) - beta . mean(x)`. Centering makes the intercept drop out of the
/// system, which is algebraically identical to augmenting `X` with a ones
/// column and leaving that column unpenalized.
///
/// With `lambda == 0` this is ordinary least squares and collinear columns
/// surface as [`LinalgError::Singular`]. Weights must be non-negative with a
/// positive sum.
pub fn weighted_ridge(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, f64), LinalgError> {
    debug_assert_eq!(x.len(), y.len());
    debug_assert_eq!(x.len(), weights.len());
    let d = x.first().map_or(0, Vec::len);

    // Catches zero, negative, and NaN totals alike.
    let total_weight: f64 = weights.iter().sum();
    if total_weight.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(LinalgError::DegenerateWeights);
    }

    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for ((row, &target), &w) in x.iter().zip(y).zip(weights) {
        for (m, &v) in x_mean.iter_mut().zip(row) {
            *m += w * v;
        }
        y_mean += w * target;
    }
    for m in &mut x_mean {
        *m /= total_weight;
    }
    y_mean /= total_weight;

    if d == 0 {
        return Ok((Vec::new(), y_mean));
    }

    // Accumulate the centered, weighted Gram matrix and right-hand side.
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    let mut centered = vec![0.0; d];
    for ((row, &target), &w) in x.iter().zip(y).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (c, (&v, &m)) in centered.iter_mut().zip(row.iter().zip(&x_mean)) {
            *c = v - m;
        }
        let yc = target - y_mean;
        for i in 0..d {
            let wi = w * centered[i];
            rhs[i] += wi * yc;
            let gram_row = &mut gram[i];
            for (j, &cj) in centered.iter().enumerate().skip(i) {
                gram_row[j] += wi * cj;
            }
        }
    }
    // Mirror the upper triangle and apply the ridge penalty.
    for i in 0..d {
        gram[i][i] += lambda;
        for j in i + 1..d {
            gram[j][i] = gram[i][j];
        }
    }

    let coefficients = solve(gram, rhs)?;
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    Ok((coefficients, intercept))
}
