//! Exploratory analysis: record clustering and feature correlation.
//!
//! Clustering pools every country's daily records, standardizes the 19
//! features, and runs k-means to surface the split between cleaner and more
//! polluted country-days. Correlation reports the full Pearson matrix over
//! the features plus the same-day index in its role as forecast target.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::CleanRecord;
use crate::scale::ScalerParams;

#[derive(Debug, Error)]
pub enum EdaError {
    #[error("no records to analyse")]
    Empty,
    #[error("cannot run {k}-means on {n} points")]
    BadK { k: usize, n: usize },
    #[error("assignments cover {got} records but {expected} were supplied")]
    AssignmentMismatch { expected: usize, got: usize },
    #[error("cluster summary expects exactly two clusters, found label {0}")]
    NotTwoClusters(usize),
}

/// Standardizes the feature matrix of a record set (population std; constant
/// columns flagged and passed through).
pub fn standardize(records: &[CleanRecord]) -> Result<(Vec<Vec<f64>>, ScalerParams), EdaError> {
    if records.is_empty() {
        return Err(EdaError::Empty);
    }
    let matrix: Vec<Vec<f64>> = records.iter().map(|r| r.features().to_vec()).collect();
    let params = ScalerParams::fit(&matrix);
    let scaled = params.transform(&matrix);
    Ok((scaled, params))
}

/// Outcome of one k-means run.
#[derive(Debug, Clone, Serialize)]
pub struct KmeansRun {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Final within-cluster sum of squares.
    pub inertia: f64,
    /// Assignment passes performed.
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment pass; Lloyd's
    /// algorithm makes this non-increasing.
    pub wcss_trace: Vec<f64>,
}

/// K-means with k-means++ seeding, 10 restarts on seeds `seed..seed+9`,
/// keeping the lowest-inertia run (ties favour the earlier restart).
pub fn kmeans(matrix: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansRun, EdaError> {
    const RESTARTS: u64 = 10;
    let mut best: Option<KmeansRun> = None;
    for restart in 0..RESTARTS {
        let run = kmeans_single(matrix, k, seed + restart)?;
        let better = match &best {
            None => true,
            Some(b) => run.inertia < b.inertia,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart ran"))
}

/// A single k-means run (no restarts); exposed so the monotone WCSS trace
/// can be inspected directly.
pub fn kmeans_single(matrix: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansRun, EdaError> {
    let n = matrix.len();
    if n == 0 {
        return Err(EdaError::Empty);
    }
    if k == 0 || k > n {
        return Err(EdaError::BadK { k, n });
    }
    const MAX_ITERATIONS: usize = 300;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(matrix, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();

    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Assignment pass: nearest centroid, ties to the lowest index.
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, point) in matrix.iter().enumerate() {
            let (label, d2) = nearest(point, &centroids);
            wcss += d2;
            if assignments[i] != label {
                assignments[i] = label;
                changed = true;
            }
        }
        trace.push(wcss);
        if !changed {
            break;
        }

        // Update pass: move centroids to member means; re-seed an emptied
        // cluster with the point farthest from its current centroid.
        let d = matrix[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (point, &label) in matrix.iter().zip(&assignments) {
            counts[label] += 1;
            for (s, &v) in sums[label].iter_mut().zip(point) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = farthest_point(matrix, &assignments, &centroids);
                centroids[c] = matrix[far].clone();
            } else {
                for (s, out) in sums[c].iter().zip(centroids[c].iter_mut()) {
                    *out = s / counts[c] as f64;
                }
            }
        }
    }

    Ok(KmeansRun {
        inertia: *trace.last().expect("at least one pass"),
        assignments,
        centroids,
        iterations,
        wcss_trace: trace,
    })
}

/// k-means++ seeding: first centre uniform, then each next centre drawn with
/// probability proportional to squared distance from the nearest chosen one.
fn plus_plus_init(matrix: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = matrix.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(matrix[rng.random_range(0..n)].clone());

    let mut d2: Vec<f64> = matrix
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut threshold = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                threshold -= w;
                if threshold <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass is zero (duplicate points); any point works.
            rng.random_range(0..n)
        };
        centroids.push(matrix[pick].clone());
        for (slot, point) in d2.iter_mut().zip(matrix) {
            *slot = slot.min(squared_distance(point, centroids.last().unwrap()));
        }
    }
    centroids
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut label = 0;
    let mut best = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d2 = squared_distance(point, centroid);
        if d2 < best {
            best = d2;
            label = c;
        }
    }
    (label, best)
}

fn farthest_point(matrix: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> usize {
    let mut far = 0;
    let mut best = -1.0;
    for (i, point) in matrix.iter().enumerate() {
        let d2 = squared_distance(point, &centroids[assignments[i]]);
        if d2 > best {
            best = d2;
            far = i;
        }
    }
    far
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two-cluster summary keyed to air quality: cluster 0 is the more polluted
/// side (higher mean PM2.5), cluster 1 the cleaner side.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    /// Relabelled per-record assignments (0 = more polluted cluster).
    pub assignments: Vec<usize>,
    pub record_counts: [usize; 2],
    /// Distinct countries contributing records to each cluster.
    pub countries: [BTreeSet<String>; 2],
    /// Countries appearing in exactly one cluster (symmetric difference).
    pub difference_countries: BTreeSet<String>,
    /// Per cluster, how many records carry index value 1..=10 (the rare 0
    /// counts under 1, as in banding).
    pub aqi_frequency: [[u64; 10]; 2],
    /// Raw (unstandardized) feature means per cluster, in feature order.
    pub feature_means: [Vec<f64>; 2],
}

/// Summarizes a two-cluster assignment over the records it was computed
/// from, relabelling so that cluster 0 has the higher mean PM2.5.
pub fn summarize_clusters(
    records: &[CleanRecord],
    assignments: &[usize],
) -> Result<ClusterSummary, EdaError> {
    if records.is_empty() {
        return Err(EdaError::Empty);
    }
    if records.len() != assignments.len() {
        return Err(EdaError::AssignmentMismatch {
            expected: records.len(),
            got: assignments.len(),
        });
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a > 1) {
        return Err(EdaError::NotTwoClusters(bad));
    }

    // Decide the relabelling from mean PM2.5 per raw label.
    let mut pm_sum = [0.0; 2];
    let mut counts = [0usize; 2];
    for (r, &a) in records.iter().zip(assignments) {
        pm_sum[a] += r.pm2_5;
        counts[a] += 1;
    }
    let mean = |c: usize| {
        if counts[c] == 0 {
            f64::NEG_INFINITY
        } else {
            pm_sum[c] / counts[c] as f64
        }
    };
    // Raw label with the higher mean becomes cluster 0.
    let relabel: [usize; 2] = if mean(0) >= mean(1) { [0, 1] } else { [1, 0] };

    let mut summary = ClusterSummary {
        assignments: assignments.iter().map(|&a| relabel[a]).collect(),
        record_counts: [0, 0],
        countries: [BTreeSet::new(), BTreeSet::new()],
        difference_countries: BTreeSet::new(),
        aqi_frequency: [[0; 10]; 2],
        feature_means: [vec![0.0; 19], vec![0.0; 19]],
    };
    for (r, &label) in records.iter().zip(&summary.assignments) {
        summary.record_counts[label] += 1;
        summary.countries[label].insert(r.country.clone());
        let level = r.aqi.max(1) as usize;
        summary.aqi_frequency[label][level - 1] += 1;
        for (m, v) in summary.feature_means[label].iter_mut().zip(r.features()) {
            *m += v;
        }
    }
    for label in 0..2 {
        if summary.record_counts[label] > 0 {
            for m in &mut summary.feature_means[label] {
                *m /= summary.record_counts[label] as f64;
            }
        }
    }
    summary.difference_countries = summary.countries[0]
        .symmetric_difference(&summary.countries[1])
        .cloned()
        .collect();
    Ok(summary)
}

/// Pearson correlation with population moments. Returns 0 when either input
/// has zero spread (callers flag that case separately).
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Pearson matrix over the 19 features plus the same-day index in its role
/// as the next-day forecast target (so its row duplicates the index feature
/// and correlates 1.0 with it).
#[derive(Debug, Clone, Serialize)]
pub struct CorrMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Columns with zero spread; their off-diagonal entries are reported as 0.
    pub constant_flags: Vec<bool>,
}

pub fn pearson_matrix(records: &[CleanRecord]) -> Result<CorrMatrix, EdaError> {
    if records.is_empty() {
        return Err(EdaError::Empty);
    }
    let mut labels: Vec<String> = crate::ingest::FEATURE_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect();
    labels.push("target".to_string());

    let m = labels.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(records.len()); m];
    for r in records {
        let f = r.features();
        for (j, &v) in f.iter().enumerate() {
            columns[j].push(v);
        }
        columns[m - 1].push(r.aqi as f64);
    }

    let constant_flags: Vec<bool> = columns
        .iter()
        .map(|c| c.iter().all(|&v| v == c[0]))
        .collect();
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        values[i][i] = 1.0;
        for j in i + 1..m {
            let r = pearson(&columns[i], &columns[j]);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrMatrix {
        labels,
        values,
        constant_flags,
    })
}
