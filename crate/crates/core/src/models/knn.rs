//! k-nearest-neighbour classification on standardized features.
//!
//! Neighbours are ranked by squared Euclidean distance with row index as the
//! deterministic tie-break, selected with a partial sort, and vote with
//! equal weight; the predicted class is the vote argmax (ties to the lowest
//! class).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{Family, ModelError};
use crate::scale::ScalerParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct KnnState {
    /// Standardized training rows.
    pub x: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub n_classes: usize,
    pub k: usize,
    pub scaler: ScalerParams,
}

pub(crate) fn fit(
    x: &[Vec<f64>],
    classes: &[usize],
    n_classes: usize,
    k: usize,
    family: Family,
) -> Result<KnnState, ModelError> {
    if k > x.len() {
        return Err(ModelError::BadHyper {
            family,
            message: format!("k = {k} exceeds the {} training rows", x.len()),
        });
    }
    let scaler = ScalerParams::fit(x);
    Ok(KnnState {
        x: scaler.transform(x),
        classes: classes.to_vec(),
        n_classes,
        k,
        scaler,
    })
}

fn vote(state: &KnnState, row: &[f64]) -> Vec<f64> {
    let scaled = state.scaler.transform_row(row);
    let mut distances: Vec<(f64, usize)> = state
        .x
        .iter()
        .enumerate()
        .map(|(i, train)| {
            let d2: f64 = train
                .iter()
                .zip(&scaled)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, i)
        })
        .collect();

    let k = state.k;
    let by_distance_then_index =
        |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < distances.len() {
        distances.select_nth_unstable_by(k - 1, by_distance_then_index);
        distances.truncate(k);
    }

    let mut dist = vec![0.0; state.n_classes];
    for &(_, i) in &distances {
        dist[state.classes[i]] += 1.0;
    }
    for v in &mut dist {
        *v /= k as f64;
    }
    dist
}

pub(crate) fn predict_proba(state: &KnnState, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.par_iter().map(|row| vote(state, row)).collect()
}
