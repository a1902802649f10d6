//! Lag-1 supervised dataset construction.
//!
//! Each training row pairs one day's features with the next day's DEFRA
//! index: the regression target is the raw index value, the classification
//! target its band. Classification rows additionally carry the current
//! day's band (the `categories` feature), mirroring how the index itself is
//! the strongest predictor one day out.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CountrySeries, FEATURE_NAMES};

/// Name of the extra classification feature holding the current day's band.
pub const CATEGORIES_FEATURE: &str = "categories";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid band specification: {0}")]
    BadBands(String),
    #[error("air-quality index {0} is outside 0-10")]
    IndexOutOfRange(u8),
    #[error("unknown feature {0:?}; valid names are the 19 model features")]
    UnknownFeature(String),
    #[error("every model feature was excluded; nothing left to train on")]
    NoFeaturesLeft,
    #[error("no country has two records on consecutive days; cannot build lag pairs")]
    NoUsablePairs,
    #[error("cannot split {n} rows into {k} folds")]
    BadFoldCount { n: usize, k: usize },
}

/// Which kind of target a dataset or model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// One contiguous index range within a [`BandMap`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Band {
    pub name: String,
    pub lo: u8,
    pub hi: u8,
}

/// Partition of the index scale 1-10 into named bands.
///
/// Class integers are assigned by sorting band names alphabetically, so the
/// default map encodes High = 0, Low = 1, Moderate = 2, Very High = 3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandMap {
    bands: Vec<Band>,
    /// Band name -> class integer (alphabetical rank).
    encoding: BTreeMap<String, usize>,
}

impl BandMap {
    /// The DEFRA daily air-quality index bands: Low 1-3, Moderate 4-6,
    /// High 7-9, Very High 10.
    pub fn default_daqi() -> BandMap {
        BandMap::new(vec![
            band("Low", 1, 3),
            band("Moderate", 4, 6),
            band("High", 7, 9),
            band("Very High", 10, 10),
        ])
        .expect("built-in bands are valid")
    }

    /// Parses a specification like `"Low:1-3,Moderate:4-6,High:7-9,Very High:10"`.
    /// Single values stand for one-element ranges.
    pub fn parse(text: &str) -> Result<BandMap, DatasetError> {
        let mut bands = Vec::new();
        for item in text.split(',') {
            let item = item.trim();
            let (name, range) = item
                .rsplit_once(':')
                .ok_or_else(|| DatasetError::BadBands(format!("{item:?} lacks a ':'")))?;
            let name = name.trim();
            let range = range.trim();
            let (lo, hi) = match range.split_once('-') {
                Some((lo, hi)) => (parse_level(lo)?, parse_level(hi)?),
                None => {
                    let v = parse_level(range)?;
                    (v, v)
                }
            };
            bands.push(band(name, lo, hi));
        }
        BandMap::new(bands)
    }

    /// Validates and builds a map: bands must have unique non-empty names
    /// and together cover 1-10 exactly once.
    pub fn new(bands: Vec<Band>) -> Result<BandMap, DatasetError> {
        let mut covered = [false; 11];
        let mut encoding = BTreeMap::new();
        for b in &bands {
            if b.name.is_empty() {
                return Err(DatasetError::BadBands("empty band name".into()));
            }
            if b.lo < 1 || b.hi > 10 || b.lo > b.hi {
                return Err(DatasetError::BadBands(format!(
                    "band {:?} has range {}-{}",
                    b.name, b.lo, b.hi
                )));
            }
            if encoding.insert(b.name.clone(), 0).is_some() {
                return Err(DatasetError::BadBands(format!(
                    "duplicate band {:?}",
                    b.name
                )));
            }
            for level in b.lo..=b.hi {
                if covered[level as usize] {
                    return Err(DatasetError::BadBands(format!(
                        "index level {level} is covered twice"
                    )));
                }
                covered[level as usize] = true;
            }
        }
        if let Some(level) = (1..=10).find(|&l| !covered[l as usize]) {
            return Err(DatasetError::BadBands(format!(
                "index level {level} is not covered by any band"
            )));
        }
        // BTreeMap iteration is alphabetical, which is exactly the class
        // encoding rule.
        for (rank, (_, class)) in encoding.iter_mut().enumerate() {
            *class = rank;
        }
        Ok(BandMap { bands, encoding })
    }

    /// Maps an index value to its band name and class integer. Zero (a rare
    /// data anomaly) clamps to level 1; callers that care count the clamp by
    /// checking for zero first. Values above 10 are an error.
    pub fn band_of(&self, aqi: u8) -> Result<(&str, usize), DatasetError> {
        if aqi > 10 {
            return Err(DatasetError::IndexOutOfRange(aqi));
        }
        let level = aqi.max(1);
        let b = self
            .bands
            .iter()
            .find(|b| (b.lo..=b.hi).contains(&level))
            .expect("validated bands cover 1-10");
        Ok((&b.name, self.encoding[&b.name]))
    }

    pub fn n_classes(&self) -> usize {
        self.bands.len()
    }

    /// Band names in class order (alphabetical).
    pub fn class_names(&self) -> Vec<String> {
        self.encoding.keys().cloned().collect()
    }

    pub fn name_of_class(&self, class: usize) -> Option<&str> {
        self.encoding
            .iter()
            .find(|(_, &c)| c == class)
            .map(|(name, _)| name.as_str())
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }
}

fn band(name: &str, lo: u8, hi: u8) -> Band {
    Band {
        name: name.to_string(),
        lo,
        hi,
    }
}

fn parse_level(text: &str) -> Result<u8, DatasetError> {
    text.trim()
        .parse()
        .map_err(|_| DatasetError::BadBands(format!("{text:?} is not an index level")))
}

/// Identifies the origin of one supervised row: the country and the day the
/// features were observed (the target day is one later).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowKey {
    pub country: String,
    pub feature_date: NaiveDate,
}

impl RowKey {
    pub fn target_date(&self) -> NaiveDate {
        self.feature_date + Days::new(1)
    }
}

/// A ready-to-train frame: features, targets, and bookkeeping.
///
/// `y` always stores `f64`; for classification the values are class
/// integers (see [`SupervisedDataset::classes`]).
#[derive(Debug, Clone)]
pub struct SupervisedDataset {
    pub task: Task,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub row_keys: Vec<RowKey>,
    /// Zero for regression.
    pub n_classes: usize,
    /// Band names in class order; empty for regression.
    pub class_names: Vec<String>,
    /// Adjacent same-country record pairs skipped because their dates were
    /// more than one day apart.
    pub excluded_gap_count: usize,
    /// Index values of 0 that banding clamped to 1.
    pub clamped_aqi_count: usize,
}

impl SupervisedDataset {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Classification targets as class integers. Panics on regression data.
    pub fn classes(&self) -> Vec<usize> {
        assert_eq!(self.task, Task::Classification);
        self.y.iter().map(|&v| v as usize).collect()
    }

    /// Copies the selected rows (in the order given) into a new dataset,
    /// keeping task metadata. Panics if an index is out of range — callers
    /// pass indices produced by a fold plan over this same dataset.
    pub fn subset(&self, indices: &[usize]) -> SupervisedDataset {
        SupervisedDataset {
            task: self.task,
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            row_keys: if self.row_keys.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.row_keys[i].clone()).collect()
            },
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
            excluded_gap_count: self.excluded_gap_count,
            clamped_aqi_count: self.clamped_aqi_count,
        }
    }
}

/// Resolves the feature exclusion list to the kept indices of
/// [`FEATURE_NAMES`], rejecting unknown names.
fn kept_features(excluded: &[String]) -> Result<Vec<usize>, DatasetError> {
    for name in excluded {
        if !FEATURE_NAMES.contains(&name.as_str()) {
            return Err(DatasetError::UnknownFeature(name.clone()));
        }
    }
    let kept: Vec<usize> = (0..FEATURE_NAMES.len())
        .filter(|&j| !excluded.iter().any(|e| e == FEATURE_NAMES[j]))
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::NoFeaturesLeft);
    }
    Ok(kept)
}

/// Builds the lag-1 supervised frame over every country.
///
/// Only record pairs on consecutive days become rows; anything across a gap
/// is counted in `excluded_gap_count` instead. `excluded` removes features
/// by name before assembly.
pub fn build_supervised(
    series: &[CountrySeries],
    task: Task,
    map: &BandMap,
    excluded: &[String],
) -> Result<SupervisedDataset, DatasetError> {
    let mut out = empty_dataset(task, map, excluded)?;
    let kept = kept_features(excluded)?;
    for s in series {
        for pair in s.records.windows(2) {
            push_pair(&mut out, &kept, task, map, &s.country, &pair[0], &pair[1])?;
        }
    }
    if out.x.is_empty() {
        return Err(DatasetError::NoUsablePairs);
    }
    Ok(out)
}

fn empty_dataset(
    task: Task,
    map: &BandMap,
    excluded: &[String],
) -> Result<SupervisedDataset, DatasetError> {
    let kept = kept_features(excluded)?;
    let mut feature_names: Vec<String> =
        kept.iter().map(|&j| FEATURE_NAMES[j].to_string()).collect();
    let (n_classes, class_names) = match task {
        Task::Regression => (0, Vec::new()),
        Task::Classification => {
            feature_names.push(CATEGORIES_FEATURE.to_string());
            (map.n_classes(), map.class_names())
        }
    };
    Ok(SupervisedDataset {
        task,
        x: Vec::new(),
        y: Vec::new(),
        feature_names,
        row_keys: Vec::new(),
        n_classes,
        class_names,
        excluded_gap_count: 0,
        clamped_aqi_count: 0,
    })
}

fn push_pair(
    out: &mut SupervisedDataset,
    kept: &[usize],
    task: Task,
    map: &BandMap,
    country: &str,
    today: &crate::ingest::CleanRecord,
    tomorrow: &crate::ingest::CleanRecord,
) -> Result<(), DatasetError> {
    if tomorrow.date - today.date != chrono::Duration::days(1) {
        out.excluded_gap_count += 1;
        return Ok(());
    }
    let full = today.features();
    let mut row: Vec<f64> = kept.iter().map(|&j| full[j]).collect();
    let y = match task {
        Task::Regression => tomorrow.aqi as f64,
        Task::Classification => {
            if today.aqi == 0 {
                out.clamped_aqi_count += 1;
            }
            let (_, today_class) = map.band_of(today.aqi)?;
            row.push(today_class as f64);
            if tomorrow.aqi == 0 {
                out.clamped_aqi_count += 1;
            }
            let (_, class) = map.band_of(tomorrow.aqi)?;
            class as f64
        }
    };
    out.x.push(row);
    out.y.push(y);
    out.row_keys.push(RowKey {
        country: country.to_string(),
        feature_date: today.date,
    });
    Ok(())
}

/// A country's final-day feature vector, used to project one day past the
/// data.
#[derive(Debug, Clone)]
pub struct ScenarioRow {
    pub country: String,
    /// Date the features were observed; the projection targets the next day.
    pub date: NaiveDate,
    pub x: Vec<f64>,
}

/// The next-day projection split: training rows, the withheld final pairs,
/// and one scenario row per country.
#[derive(Debug, Clone)]
pub struct ScenarioSplit {
    /// All lag pairs except those whose target day is a country's final day.
    pub training: SupervisedDataset,
    /// The withheld final pairs (empty where the last two days are not
    /// consecutive).
    pub holdout: SupervisedDataset,
    /// One row per country with at least two records.
    pub scenario: Vec<ScenarioRow>,
}

/// Splits the data for projection: each country's final lag pair is withheld
/// from training so the last observed day can be predicted blind, and the
/// final day's features become the scenario row for the day after.
pub fn split_scenario(
    series: &[CountrySeries],
    task: Task,
    map: &BandMap,
    excluded: &[String],
) -> Result<ScenarioSplit, DatasetError> {
    let kept = kept_features(excluded)?;
    let mut training = empty_dataset(task, map, excluded)?;
    let mut holdout = empty_dataset(task, map, excluded)?;
    let mut scenario = Vec::new();

    for s in series {
        let n = s.records.len();
        if n < 2 {
            continue;
        }
        for (i, pair) in s.records.windows(2).enumerate() {
            let dest = if i + 2 == n {
                &mut holdout
            } else {
                &mut training
            };
            push_pair(dest, &kept, task, map, &s.country, &pair[0], &pair[1])?;
        }
        let last = &s.records[n - 1];
        let full = last.features();
        let mut row: Vec<f64> = kept.iter().map(|&j| full[j]).collect();
        if task == Task::Classification {
            if last.aqi == 0 {
                training.clamped_aqi_count += 1;
            }
            let (_, class) = map.band_of(last.aqi)?;
            row.push(class as f64);
        }
        scenario.push(ScenarioRow {
            country: s.country.clone(),
            date: last.date,
            x: row,
        });
    }
    if training.x.is_empty() {
        return Err(DatasetError::NoUsablePairs);
    }
    Ok(ScenarioSplit {
        training,
        holdout,
        scenario,
    })
}

/// A k-fold assignment of `n` rows.
#[derive(Debug, Clone, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    /// `assignment[i]` is the fold of row `i`.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.assignment.len()
    }

    /// Rows held out in `fold`.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Rows trained on for `fold`.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Random k-fold split: a seeded Fisher-Yates shuffle of the row order,
/// dealt round-robin into folds. Fold sizes differ by at most one, with the
/// larger folds first (11 rows in 5 folds gives sizes 3, 2, 2, 2, 2).
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 || n < k {
        return Err(DatasetError::BadFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut assignment = vec![0; n];
    for (position, &row) in order.iter().enumerate() {
        assignment[row] = position % k;
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed,
    })
}

/// Alternative fold plan that respects time: rows are ordered by feature
/// date (ties by row index) and cut into `k` contiguous blocks, so no fold
/// mixes the far past with the far future. Addresses the leakage caveat of
/// random folds on overlapping daily series.
pub fn kfold_time_blocked(row_keys: &[RowKey], k: usize) -> Result<FoldPlan, DatasetError> {
    let n = row_keys.len();
    if k < 2 || n < k {
        return Err(DatasetError::BadFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (row_keys[i].feature_date, i));

    let base = n / k;
    let extra = n % k;
    let mut assignment = vec![0; n];
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for _ in 0..size {
            assignment[order[cursor]] = fold;
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed: 0,
    })
}
