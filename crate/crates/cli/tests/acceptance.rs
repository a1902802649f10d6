//! The acceptance gate: every release criterion checked in one run, one
//! verdict line per criterion.
//!
//! Criteria 1-3 are self-contained oracle suites: independently coded
//! brute-force or closed-form re-derivations of the metrics, solvers, and
//! explanation methods, run against the library on randomized instances.
//! Criteria 4-8 replay the published study and need the full World Weather
//! Repository table; point `AQICAST_SNAPSHOT` at the CSV (or place it at
//! `data/WorldWeatherRepository.csv` in the repository root) to arm them.
//! Without it they report SKIP rather than silently passing. Criterion 9
//! drives the compiled binary end to end, twice, on a snapshot-sized
//! synthetic table and demands byte-identical artifacts.
//!
//! Every criterion prints `PASS`, `FAIL`, or `SKIP` with a one-line detail;
//! the test panics at the end if anything failed, with the full report in
//! the panic message so it survives output capture.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use aqicast_core::dataset::{
    build_supervised, kfold, kfold_time_blocked, BandMap, RowKey, SupervisedDataset, Task,
};
use aqicast_core::eda;
use aqicast_core::explain::{lime_explain, pdp, permutation_importance, LimeConfig};
use aqicast_core::forecast::{project_next_day, round2, ProjectionResult, Round2};
use aqicast_core::ingest::{clean, group_by_country, parse_csv};
use aqicast_core::metrics::{
    classification_scores, confusion_matrix, cross_val, mcc, nrmse_by_country, regression_scores,
    ConfusionMatrix, Mcc,
};
use aqicast_core::models::{fit, logistic, tree, zoo, Family, HyperValue, ModelSpec, Predictor};
use aqicast_core::scale::ScalerParams;
use aqicast_core::synth::{self, SynthOptions};
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ------------------------------------------------------------ verdict frame

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

/// Collects check failures for one criterion; the criterion passes only when
/// nothing was recorded.
struct Check {
    failures: Vec<String>,
}

impl Check {
    fn new() -> Check {
        Check {
            failures: Vec::new(),
        }
    }

    fn ok(&mut self, condition: bool, detail: impl FnOnce() -> String) {
        if !condition && self.failures.len() < 12 {
            self.failures.push(detail());
        } else if !condition {
            // Keep the report readable; twelve examples are plenty.
        }
    }

    fn close(&mut self, label: &str, actual: f64, expected: f64, tolerance: f64) {
        self.ok((actual - expected).abs() <= tolerance, || {
            format!("{label}: got {actual}, expected {expected} ± {tolerance}")
        });
    }

    fn verdict(self, pass_detail: String) -> Verdict {
        if self.failures.is_empty() {
            Verdict::Pass(pass_detail)
        } else {
            Verdict::Fail(self.failures.join("; "))
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn day(offset: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Days::new(offset as u64)
}

/// A bare regression frame around externally generated rows, for driving
/// the model layer directly.
fn frame(task: Task, x: Vec<Vec<f64>>, y: Vec<f64>, n_classes: usize) -> SupervisedDataset {
    let d = x[0].len();
    let class_names = (0..n_classes).map(|c| format!("band{c}")).collect();
    SupervisedDataset {
        task,
        row_keys: (0..x.len())
            .map(|i| RowKey {
                country: "oracle".to_string(),
                feature_date: day(i),
            })
            .collect(),
        feature_names: (0..d).map(|j| format!("f{j}")).collect(),
        x,
        y,
        n_classes,
        class_names,
        excluded_gap_count: 0,
        clamped_aqi_count: 0,
    }
}

/// Gauss-Jordan solve with partial pivoting — the test's own tiny solver,
/// shared with nothing in the library.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let lead = a[col][col];
        for j in col..d {
            a[col][j] /= lead;
        }
        b[col] /= lead;
        for row in 0..d {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..d {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    Some(b)
}

// ======================================================= criterion 1 oracles

/// Pearson via the raw-moment identity — a different evaluation path from
/// the library's centered two-pass form.
fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return 0.0;
    }
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

fn pearson_suite(check: &mut Check) -> usize {
    let mut r = rng(101);
    let instances = 140;
    for i in 0..instances {
        let n = 2 + i % 11;
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = match i % 7 {
            0 => vec![r.random_range(-3.0..3.0); n],
            3 => x.iter().map(|v| 2.5 * v - 1.0).collect(),
            _ => (0..n).map(|_| r.random_range(-10.0..10.0)).collect(),
        };
        let got = eda::pearson(&x, &y);
        let want = pearson_oracle(&x, &y);
        check.close(&format!("pearson[{i}] n={n}"), got, want, 1e-9);
        if i % 7 == 3 && x.iter().any(|&v| v != x[0]) {
            check.close(&format!("pearson[{i}] exact linear"), got, 1.0, 1e-9);
        }
    }
    instances
}

/// Multiclass Matthews correlation as the plain Pearson correlation between
/// one-hot indicator columns — Gorodkin's definition, computed literally.
fn mcc_oracle(t: &[usize], p: &[usize], k: usize) -> (f64, bool) {
    let n = t.len() as f64;
    let mut cov_tp = 0.0;
    let mut cov_tt = 0.0;
    let mut cov_pp = 0.0;
    for class in 0..k {
        let mt = t.iter().filter(|&&v| v == class).count() as f64 / n;
        let mp = p.iter().filter(|&&v| v == class).count() as f64 / n;
        for i in 0..t.len() {
            let it = if t[i] == class { 1.0 } else { 0.0 } - mt;
            let ip = if p[i] == class { 1.0 } else { 0.0 } - mp;
            cov_tp += it * ip;
            cov_tt += it * it;
            cov_pp += ip * ip;
        }
    }
    let denom = (cov_tt * cov_pp).sqrt();
    if denom == 0.0 {
        (0.0, true)
    } else {
        (cov_tp / denom, false)
    }
}

fn confusion_suite(check: &mut Check) -> usize {
    let mut r = rng(202);
    let instances = 120;
    for i in 0..instances {
        let n = 1 + i % 12;
        let k = 2 + i % 3;
        let truth: Vec<usize> = if i % 7 == 2 {
            vec![i % k; n]
        } else {
            (0..n).map(|_| r.random_range(0..k)).collect()
        };
        let predicted: Vec<usize> = if i % 5 == 0 {
            truth.clone()
        } else {
            (0..n).map(|_| r.random_range(0..k)).collect()
        };

        let cm = confusion_matrix(&truth, &predicted, k).expect("labels are in range");
        // Counts are combinatorial: recount by hand and demand equality.
        for pred_class in 0..k {
            for true_class in 0..k {
                let by_hand = truth
                    .iter()
                    .zip(&predicted)
                    .filter(|&(&t, &p)| t == true_class && p == pred_class)
                    .count() as u64;
                check.ok(cm.counts[pred_class][true_class] == by_hand, || {
                    format!(
                        "confusion[{i}] cell ({pred_class},{true_class}): {} vs {by_hand}",
                        cm.counts[pred_class][true_class]
                    )
                });
            }
            let support = truth.iter().filter(|&&t| t == pred_class).count() as u64;
            check.ok(cm.supports[pred_class] == support, || {
                format!("confusion[{i}] support {pred_class}")
            });
        }

        let got = mcc(&cm);
        let (want, want_degenerate) = mcc_oracle(&truth, &predicted, k);
        check.close(&format!("mcc[{i}] n={n} k={k}"), got.value, want, 1e-9);
        check.ok(got.degenerate == want_degenerate, || {
            format!(
                "mcc[{i}] degenerate flag: {} vs {want_degenerate}",
                got.degenerate
            )
        });
        if i % 5 == 0 && !got.degenerate {
            check.close(
                &format!("mcc[{i}] perfect prediction"),
                got.value,
                1.0,
                1e-12,
            );
        }
    }
    instances
}

fn report_suite(check: &mut Check) -> usize {
    let mut r = rng(303);
    let instances = 120;
    for i in 0..instances {
        let n = 1 + i % 12;
        let k = 2 + i % 3;
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let predicted: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let scores = classification_scores(&truth, &predicted, k).expect("labels in range");

        let mut weighted_p = 0.0;
        let mut weighted_r = 0.0;
        let mut weighted_f = 0.0;
        for class in 0..k {
            let tp = truth
                .iter()
                .zip(&predicted)
                .filter(|&(&t, &p)| t == class && p == class)
                .count() as f64;
            let fp = truth
                .iter()
                .zip(&predicted)
                .filter(|&(&t, &p)| t != class && p == class)
                .count() as f64;
            let fn_ = truth
                .iter()
                .zip(&predicted)
                .filter(|&(&t, &p)| t == class && p != class)
                .count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let row = &scores.per_class[class];
            check.close(
                &format!("precision[{i}] class {class}"),
                row.precision,
                precision,
                1e-9,
            );
            check.close(
                &format!("recall[{i}] class {class}"),
                row.recall,
                recall,
                1e-9,
            );
            check.close(&format!("f1[{i}] class {class}"), row.f1, f1, 1e-9);
            let support = (tp + fn_) as u64;
            check.ok(row.support == support, || {
                format!("support[{i}] class {class}: {} vs {support}", row.support)
            });
            weighted_p += support as f64 * precision;
            weighted_r += support as f64 * recall;
            weighted_f += support as f64 * f1;
        }
        let total = n as f64;
        check.close(
            &format!("precision[{i}] weighted"),
            scores.precision,
            weighted_p / total,
            1e-9,
        );
        check.close(
            &format!("recall[{i}] weighted"),
            scores.recall,
            weighted_r / total,
            1e-9,
        );
        check.close(
            &format!("f1[{i}] weighted"),
            scores.f1,
            weighted_f / total,
            1e-9,
        );
        let hits = truth
            .iter()
            .zip(&predicted)
            .filter(|&(&t, &p)| t == p)
            .count() as f64;
        check.close(
            &format!("accuracy[{i}]"),
            scores.accuracy,
            hits / total,
            1e-12,
        );
    }
    instances
}

fn nrmse_suite(check: &mut Check) -> usize {
    let mut r = rng(404);
    let instances = 120;
    for i in 0..instances {
        let countries = 2 + i % 3;
        let mut keys = Vec::new();
        let mut truth = Vec::new();
        let mut predicted = Vec::new();
        for c in 0..countries {
            let rows = 1 + r.random_range(0..4usize);
            for d in 0..rows.min(12 / countries) {
                keys.push(RowKey {
                    country: format!("c{c}"),
                    feature_date: day(d),
                });
                // Mix regimes: plain values, zero-mean columns (range
                // fallback), and all-zero columns (degenerate pin).
                let (t, p) = match i % 4 {
                    0 if c == 0 => (0.0, r.random_range(-1.0..1.0)),
                    1 if c == 0 => {
                        let v = r.random_range(0.5..2.0);
                        (if d % 2 == 0 { v } else { -v }, r.random_range(-1.0..1.0))
                    }
                    _ => (r.random_range(1.0..10.0), r.random_range(1.0..10.0)),
                };
                truth.push(t);
                predicted.push(p);
            }
        }
        let threshold = r.random_range(0.05..0.3);
        let rows = nrmse_by_country(&keys, &truth, &predicted, threshold).expect("aligned inputs");

        // Independent regrouping and recomputation.
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (idx, key) in keys.iter().enumerate() {
            groups.entry(&key.country).or_default().push(idx);
        }
        check.ok(rows.len() == groups.len(), || {
            format!("nrmse[{i}] group count {} vs {}", rows.len(), groups.len())
        });
        for (row, (country, indices)) in rows.iter().zip(&groups) {
            check.ok(&row.country == country, || {
                format!("nrmse[{i}] order: {} vs {country}", row.country)
            });
            let m = indices.len() as f64;
            let rmse = (indices
                .iter()
                .map(|&idx| (truth[idx] - predicted[idx]).powi(2))
                .sum::<f64>()
                / m)
                .sqrt();
            let mean = indices.iter().map(|&idx| truth[idx]).sum::<f64>() / m;
            let max = indices
                .iter()
                .map(|&idx| truth[idx])
                .fold(f64::MIN, f64::max);
            let min = indices
                .iter()
                .map(|&idx| truth[idx])
                .fold(f64::MAX, f64::min);
            let range = max - min;
            let (value, degenerate) = if mean != 0.0 {
                (rmse / mean, false)
            } else if range > 0.0 {
                (rmse / range, false)
            } else {
                (0.0, true)
            };
            check.close(&format!("nrmse[{i}] {country} rmse"), row.rmse, rmse, 1e-9);
            check.close(
                &format!("nrmse[{i}] {country} value"),
                row.nrmse,
                value,
                1e-9,
            );
            check.close(
                &format!("nrmse[{i}] {country} range"),
                row.range,
                range,
                1e-12,
            );
            check.ok(row.degenerate == degenerate, || {
                format!("nrmse[{i}] {country} degenerate flag")
            });
            check.ok(row.above_threshold == (value > threshold), || {
                format!("nrmse[{i}] {country} threshold comparison")
            });
        }
    }
    instances
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Every positive-gain variance split, gains via the two-pass centered SSE —
/// a different accumulation from the library's running-moment scan.
fn variance_candidates(x: &[Vec<f64>], y: &[f64]) -> Vec<Candidate> {
    let n = x.len();
    let d = x[0].len();
    let sse = |idx: &[usize]| -> f64 {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum()
    };
    let all: Vec<usize> = (0..n).collect();
    let parent = sse(&all);
    let mut out = Vec::new();
    for feature in 0..d {
        let mut order = all.clone();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        for p in 1..n {
            if x[order[p]][feature] == x[order[p - 1]][feature] {
                continue;
            }
            let (left, right) = order.split_at(p);
            let gain = (parent - sse(left) - sse(right)) / n as f64;
            if gain > 1e-12 {
                out.push(Candidate {
                    feature,
                    threshold: (x[order[p - 1]][feature] + x[order[p]][feature]) / 2.0,
                    gain,
                });
            }
        }
    }
    out
}

/// Picks the winner under the library's documented tie rules: highest gain,
/// then earliest feature, then lowest threshold. Candidates arrive in
/// feature-major, threshold-ascending order, so strictly-greater keeps the
/// right one.
fn pick(candidates: &[Candidate]) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for &c in candidates {
        if best.map_or(true, |b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best
}

fn variance_split_suite(check: &mut Check) -> usize {
    let mut r = rng(505);
    let instances = 200;
    for i in 0..instances {
        let n = 2 + i % 11;
        let d = 1 + i % 3;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        if (i + j) % 3 == 0 {
                            // Small grids force duplicate values and exercise
                            // the equal-value skip in the scan.
                            r.random_range(0..3) as f64
                        } else {
                            r.random_range(-5.0..5.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = if i % 9 == 4 {
            vec![2.0; n]
        } else {
            (0..n).map(|_| r.random_range(0.0..10.0)).collect()
        };

        let got = tree::best_split(
            &x,
            tree::SplitTargets::Variance(&y),
            &(0..d).collect::<Vec<_>>(),
        );
        let candidates = variance_candidates(&x, &y);
        let want = pick(&candidates);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                check.close(&format!("var split[{i}] gain"), g.gain, w.gain, 1e-9);
                // Demand the exact winner when it is unique by a clear
                // margin; on numerical near-ties accept any maximizer.
                let runner_up = candidates
                    .iter()
                    .filter(|c| {
                        (c.feature, c.threshold.to_bits()) != (w.feature, w.threshold.to_bits())
                    })
                    .map(|c| c.gain)
                    .fold(f64::MIN, f64::max);
                if w.gain - runner_up > 1e-7 {
                    check.ok(g.feature == w.feature && g.threshold == w.threshold, || {
                        format!(
                            "var split[{i}]: feature {} at {} vs feature {} at {}",
                            g.feature, g.threshold, w.feature, w.threshold
                        )
                    });
                } else {
                    let near = candidates.iter().any(|c| {
                        c.feature == g.feature
                            && c.threshold == g.threshold
                            && (c.gain - w.gain).abs() <= 1e-9
                    });
                    check.ok(near, || {
                        format!("var split[{i}]: winner not among tied maximizers")
                    });
                }
            }
            (got, want) => {
                // The split-or-no-split boundary is only ambiguous when the
                // best gain sits at the noise floor; otherwise the verdicts
                // must agree.
                let max_gain = want.map_or(0.0, |w| w.gain);
                check.ok(max_gain <= 1e-9 && got.map_or(true, |g| g.gain <= 1e-9), || {
                    format!(
                        "var split[{i}]: some/none disagreement (library {:?}, oracle gain {max_gain})",
                        got.map(|g| (g.feature, g.threshold))
                    )
                });
            }
        }
    }
    instances
}

/// Exact-rational Gini candidate: the gain equals `num/den` with both parts
/// integral, so comparisons carry no floating-point ambiguity at all.
struct RationalCandidate {
    feature: usize,
    threshold: f64,
    num: i128,
    den: i128,
}

fn gini_candidates(x: &[Vec<f64>], classes: &[usize], k: usize) -> Vec<RationalCandidate> {
    let n = x.len() as i128;
    let d = x[0].len();
    let mut out = Vec::new();
    for feature in 0..d {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let mut total = vec![0i128; k];
        for &i in &order {
            total[classes[i]] += 1;
        }
        let sum_sq = |counts: &[i128]| counts.iter().map(|&c| c * c).sum::<i128>();
        let total_sq = sum_sq(&total);
        let mut left = vec![0i128; k];
        for p in 1..x.len() {
            left[classes[order[p - 1]]] += 1;
            if x[order[p]][feature] == x[order[p - 1]][feature] {
                continue;
            }
            let nl = p as i128;
            let nr = n - nl;
            let right: Vec<i128> = total.iter().zip(&left).map(|(&t, &l)| t - l).collect();
            // gain = ΣL²/(n·nl) + ΣR²/(n·nr) − ΣC²/n², over common
            // denominator n²·nl·nr.
            let num = n * nr * sum_sq(&left) + n * nl * sum_sq(&right) - nl * nr * total_sq;
            if num > 0 {
                out.push(RationalCandidate {
                    feature,
                    threshold: (x[order[p - 1]][feature] + x[order[p]][feature]) / 2.0,
                    num,
                    den: n * n * nl * nr,
                });
            }
        }
    }
    out
}

fn gini_split_suite(check: &mut Check) -> usize {
    let mut r = rng(606);
    let instances = 160;
    for i in 0..instances {
        let n = 2 + i % 11;
        let d = 1 + i % 2;
        let k = 2 + i % 2;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        if (i + j) % 2 == 0 {
                            r.random_range(0..4) as f64
                        } else {
                            r.random_range(-5.0..5.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let classes: Vec<usize> = if i % 8 == 5 {
            vec![i % k; n]
        } else {
            (0..n).map(|_| r.random_range(0..k)).collect()
        };

        let got = tree::best_split(
            &x,
            tree::SplitTargets::Gini {
                classes: &classes,
                n_classes: k,
            },
            &(0..d).collect::<Vec<_>>(),
        );
        let candidates = gini_candidates(&x, &classes, k);
        // Exact-fraction maximum: strictly-greater keeps the earliest
        // feature and lowest threshold, mirroring the documented rules.
        let mut best: Option<&RationalCandidate> = None;
        for c in &candidates {
            if best.map_or(true, |b| c.num * b.den > b.num * c.den) {
                best = Some(c);
            }
        }
        match (got, best) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                let exact = w.num as f64 / w.den as f64;
                check.close(&format!("gini split[{i}] gain"), g.gain, exact, 1e-9);
                let tied: Vec<&RationalCandidate> = candidates
                    .iter()
                    .filter(|c| c.num * w.den == w.num * c.den)
                    .collect();
                if tied.len() == 1 {
                    check.ok(g.feature == w.feature && g.threshold == w.threshold, || {
                        format!(
                            "gini split[{i}]: feature {} at {} vs feature {} at {}",
                            g.feature, g.threshold, w.feature, w.threshold
                        )
                    });
                } else {
                    // Mathematically tied maxima: any of them is a correct
                    // answer, whatever floating-point noise picked.
                    check.ok(
                        tied.iter()
                            .any(|c| c.feature == g.feature && c.threshold == g.threshold),
                        || format!("gini split[{i}]: winner not among exact maximizers"),
                    );
                }
            }
            (got, want) => {
                check.ok(false, || {
                    format!(
                        "gini split[{i}]: some/none disagreement (library {:?}, oracle {:?})",
                        got.map(|g| (g.feature, g.threshold)),
                        want.map(|w| (w.feature, w.threshold))
                    )
                });
            }
        }
    }
    instances
}

fn linear_solver_suite(check: &mut Check) -> usize {
    let mut r = rng(707);
    let instances = 120;
    let mut fitted = 0usize;
    for i in 0..instances {
        let d = 1 + i % 4;
        let n = (d + 3) + i % (12 - d - 2);
        let lambda = [0.0, 0.3, 2.5][i % 3];
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-5.0..5.0)).collect())
            .collect();
        let true_w: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let exact_affine = i % 4 == 1;
        let y: Vec<f64> = if exact_affine {
            x.iter()
                .map(|row| 0.75 + row.iter().zip(&true_w).map(|(v, w)| v * w).sum::<f64>())
                .collect()
        } else {
            (0..n).map(|_| r.random_range(-5.0..5.0)).collect()
        };

        let family = if lambda == 0.0 {
            Family::Ols
        } else {
            Family::Ridge
        };
        let mut spec = ModelSpec::new(family, Task::Regression, 0).expect("regression family");
        if family == Family::Ridge {
            spec.hyper
                .set(Family::Ridge, "lambda", &HyperValue::Float(lambda))
                .expect("ridge accepts lambda");
        }
        let data = frame(Task::Regression, x.clone(), y.clone(), 0);
        let model = match fit(&spec, &data) {
            Ok(m) => m,
            // A genuinely singular random draw is astronomically rare; skip
            // it rather than fail, but keep counting fitted instances.
            Err(_) => continue,
        };
        fitted += 1;

        // Probe the fitted function: linear models reveal their
        // coefficients through predictions at the unit vectors.
        let zero = vec![0.0; d];
        let intercept = model
            .predict(std::slice::from_ref(&zero))
            .expect("width matches")[0];
        let coef: Vec<f64> = (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                model
                    .predict(std::slice::from_ref(&e))
                    .expect("width matches")[0]
                    - intercept
            })
            .collect();

        // Independent solve of the centered normal equations
        // (XᵀX + λI)β = Xᵀy with the intercept recovered from the means.
        let xm: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|row| row[j]).sum::<f64>() / n as f64)
            .collect();
        let ym = y.iter().sum::<f64>() / n as f64;
        let mut gram = vec![vec![0.0; d]; d];
        let mut rhs = vec![0.0; d];
        for (row, &t) in x.iter().zip(&y) {
            for a in 0..d {
                let ca = row[a] - xm[a];
                rhs[a] += ca * (t - ym);
                for b in 0..d {
                    gram[a][b] += ca * (row[b] - xm[b]);
                }
            }
        }
        for (j, row) in gram.iter_mut().enumerate() {
            row[j] += lambda;
        }
        let beta = solve(gram, rhs).expect("regularized or well-conditioned system");
        let beta_intercept = ym - beta.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();

        for j in 0..d {
            check.close(
                &format!("linear[{i}] beta[{j}] (lambda {lambda})"),
                coef[j],
                beta[j],
                1e-9,
            );
        }
        check.close(
            &format!("linear[{i}] intercept"),
            intercept,
            beta_intercept,
            1e-9,
        );
        if exact_affine && lambda == 0.0 {
            for j in 0..d {
                check.close(
                    &format!("linear[{i}] exact recovery [{j}]"),
                    coef[j],
                    true_w[j],
                    1e-9,
                );
            }
        }
    }
    check.ok(fitted >= 100, || {
        format!("only {fitted} linear instances fitted")
    });
    fitted
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut check = Check::new();
    let pearson = pearson_suite(&mut check);
    let confusion = confusion_suite(&mut check);
    let report = report_suite(&mut check);
    let nrmse = nrmse_suite(&mut check);
    let variance = variance_split_suite(&mut check);
    let gini = gini_split_suite(&mut check);
    let linear = linear_solver_suite(&mut check);
    let elapsed = started.elapsed();
    check.ok(elapsed < Duration::from_secs(30), || {
        format!("oracle suite took {elapsed:.1?}, budget 30s")
    });
    check.verdict(format!(
        "{} instances ≤12 rows (pearson {pearson}, confusion {confusion}, report {report}, nrmse {nrmse}, variance splits {variance}, gini splits {gini}, linear solves {linear}) in {elapsed:.1?}",
        pearson + confusion + report + nrmse + variance + gini + linear
    ))
}

// ==================================================== criterion 2 kernels

fn logistic_gradient_suite(check: &mut Check) {
    let mut r = rng(808);
    for i in 0..12 {
        let d = 2 + i % 3;
        let k = 2 + i % 3;
        let n = 10 + i;
        let l2 = [0.0, 0.01, 0.5][i % 3];
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let classes: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut weights: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let mut intercepts: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();

        let (grad_w, grad_b) = logistic::gradients(&weights, &intercepts, &x, &classes, l2);
        let h = 1e-5;
        let relative = |analytic: f64, numeric: f64| {
            (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-6)
        };
        for c in 0..k {
            for j in 0..d {
                let saved = weights[c][j];
                weights[c][j] = saved + h;
                let up = logistic::log_loss(&weights, &intercepts, &x, &classes, l2);
                weights[c][j] = saved - h;
                let down = logistic::log_loss(&weights, &intercepts, &x, &classes, l2);
                weights[c][j] = saved;
                let numeric = (up - down) / (2.0 * h);
                check.ok(relative(grad_w[c][j], numeric) < 1e-5, || {
                    format!(
                        "logistic grad[{i}] w[{c}][{j}]: analytic {} vs numeric {numeric}",
                        grad_w[c][j]
                    )
                });
            }
            let saved = intercepts[c];
            intercepts[c] = saved + h;
            let up = logistic::log_loss(&weights, &intercepts, &x, &classes, l2);
            intercepts[c] = saved - h;
            let down = logistic::log_loss(&weights, &intercepts, &x, &classes, l2);
            intercepts[c] = saved;
            let numeric = (up - down) / (2.0 * h);
            check.ok(relative(grad_b[c], numeric) < 1e-5, || {
                format!(
                    "logistic grad[{i}] b[{c}]: analytic {} vs numeric {numeric}",
                    grad_b[c]
                )
            });
        }
    }
}

fn residual_orthogonality_suite(check: &mut Check) {
    let mut r = rng(909);
    for i in 0..20 {
        let d = 2 + i % 4;
        let n = 20 + i;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-5.0..5.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| row.iter().sum::<f64>() * 0.4 + r.random_range(-3.0..3.0))
            .collect();
        let spec = ModelSpec::new(Family::Ols, Task::Regression, 0).expect("ols regresses");
        let data = frame(Task::Regression, x.clone(), y.clone(), 0);
        let model = fit(&spec, &data).expect("well-conditioned random design");
        let fitted = model.predict(&data.x).expect("widths match");
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(t, p)| t - p).collect();
        // Least squares leaves residuals orthogonal to every regressor and
        // to the constant column.
        for j in 0..d {
            let dot = x
                .iter()
                .zip(&residuals)
                .map(|(row, res)| row[j] * res)
                .sum::<f64>();
            check.ok((dot / n as f64).abs() < 1e-8, || {
                format!("ols[{i}] residual·x[{j}] = {}", dot / n as f64)
            });
        }
        let total = residuals.iter().sum::<f64>() / n as f64;
        check.ok(total.abs() < 1e-8, || {
            format!("ols[{i}] residual mean {total}")
        });
    }
}

fn boosting_monotone_suite(check: &mut Check) {
    let (series, _) = synth::clean_series(&SynthOptions {
        countries: 10,
        days: 25,
        seed: 11,
        ..SynthOptions::default()
    });
    let map = BandMap::default_daqi();
    for task in [Task::Regression, Task::Classification] {
        let data = build_supervised(&series, task, &map, &[]).expect("synthetic table has pairs");
        for family in [Family::GbtPresetA, Family::GbtPresetB] {
            let spec = ModelSpec::new(family, task, 5).expect("boosting supports both tasks");
            let model = fit(&spec, &data).expect("boosting fits the synthetic table");
            let trace = model
                .training_loss()
                .expect("boosted models expose the loss trace");
            check.ok(trace.len() >= 2, || {
                format!("{family:?} {task:?}: trace too short")
            });
            for (round, pair) in trace.windows(2).enumerate() {
                check.ok(pair[1] <= pair[0] + 1e-12, || {
                    format!(
                        "{family:?} {task:?} round {round}: loss rose {} -> {}",
                        pair[0], pair[1]
                    )
                });
            }
            check.ok(trace[trace.len() - 1] < trace[0], || {
                format!("{family:?} {task:?}: no net improvement")
            });
        }
    }
}

fn fold_plan_suite(check: &mut Check) {
    let mut r = rng(1010);
    for i in 0..40 {
        let n = 2 + r.random_range(0..39usize);
        let k = 2 + r.random_range(0..n.saturating_sub(1).max(1));
        let k = k.min(n);
        let plan = kfold(n, k, i as u64).expect("2 <= k <= n");
        let again = kfold(n, k, i as u64).expect("2 <= k <= n");
        check.ok(plan.assignment == again.assignment, || {
            format!("kfold[{i}]: same seed, different plan")
        });

        let mut seen = vec![false; n];
        for fold in 0..k {
            for idx in plan.test_indices(fold) {
                check.ok(!seen[idx], || format!("kfold[{i}]: row {idx} in two folds"));
                seen[idx] = true;
            }
        }
        check.ok(seen.iter().all(|&s| s), || {
            format!("kfold[{i}]: uncovered rows")
        });
        let sizes = plan.fold_sizes();
        let (max, min) = (sizes.iter().max().unwrap(), sizes.iter().min().unwrap());
        check.ok(max - min <= 1, || format!("kfold[{i}]: sizes {sizes:?}"));
        check.ok(sizes.windows(2).all(|w| w[0] >= w[1]), || {
            format!("kfold[{i}]: larger folds must come first, got {sizes:?}")
        });
    }

    // Time-blocked folds: still a partition, but contiguous in date order.
    for i in 0..20 {
        let n = 5 + r.random_range(0..30usize);
        let k = 2 + r.random_range(0..3usize);
        let keys: Vec<RowKey> = (0..n)
            .map(|_| RowKey {
                country: "t".to_string(),
                feature_date: day(r.random_range(0..10usize)),
            })
            .collect();
        let plan = kfold_time_blocked(&keys, k).expect("k <= n");
        let mut seen = vec![false; n];
        for fold in 0..k {
            for idx in plan.test_indices(fold) {
                check.ok(!seen[idx], || {
                    format!("blocked[{i}]: row {idx} in two folds")
                });
                seen[idx] = true;
            }
        }
        check.ok(seen.iter().all(|&s| s), || {
            format!("blocked[{i}]: uncovered rows")
        });
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&idx| (keys[idx].feature_date, idx));
        let sequence: Vec<usize> = order.iter().map(|&idx| plan.assignment[idx]).collect();
        check.ok(sequence.windows(2).all(|w| w[0] <= w[1]), || {
            format!("blocked[{i}]: folds interleave in time: {sequence:?}")
        });
    }
}

fn probability_suite(check: &mut Check) {
    let (series, _) = synth::clean_series(&SynthOptions {
        countries: 10,
        days: 25,
        seed: 13,
        ..SynthOptions::default()
    });
    let map = BandMap::default_daqi();
    let data = build_supervised(&series, Task::Classification, &map, &[])
        .expect("synthetic table has pairs");
    let probe = &data.x[..data.x.len().min(50)];
    for spec in zoo(Task::Classification, 17) {
        let model = match fit(&spec, &data) {
            Ok(m) => m,
            Err(e) => {
                check.ok(false, || format!("{} failed to fit: {e}", spec.name()));
                continue;
            }
        };
        for (row, proba) in model
            .predict_proba(probe)
            .expect("widths match")
            .iter()
            .enumerate()
        {
            let sum: f64 = proba.iter().sum();
            check.ok((sum - 1.0).abs() < 1e-9, || {
                format!("{} row {row}: probabilities sum to {sum}", spec.name())
            });
            check.ok(proba.iter().all(|&p| p >= -1e-12), || {
                format!("{} row {row}: negative probability", spec.name())
            });
        }
    }
}

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let mut check = Check::new();
    logistic_gradient_suite(&mut check);
    residual_orthogonality_suite(&mut check);
    boosting_monotone_suite(&mut check);
    fold_plan_suite(&mut check);
    probability_suite(&mut check);
    let elapsed = started.elapsed();
    check.ok(elapsed < Duration::from_secs(60), || {
        format!("kernel suite took {elapsed:.1?}, budget 60s")
    });
    check.verdict(format!(
        "gradients vs central differences, residual orthogonality, monotone boosting, fold partitions, probability rows in {elapsed:.1?}"
    ))
}

// ================================================ criterion 3 explanations

/// A model that is affine by construction, so its coefficients are the
/// ground truth any local explanation must recover.
struct AffineModel {
    w: Vec<f64>,
    b: f64,
}

impl Predictor for AffineModel {
    fn task(&self) -> Task {
        Task::Regression
    }
    fn n_features(&self) -> usize {
        self.w.len()
    }
    fn values(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter()
            .map(|row| self.b + row.iter().zip(&self.w).map(|(v, w)| v * w).sum::<f64>())
            .collect()
    }
    fn probabilities(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|_| vec![1.0]).collect()
    }
}

/// Additive in each feature, so partial dependence must trace each
/// component up to a constant shift.
struct AdditiveModel;

impl AdditiveModel {
    fn first(v: f64) -> f64 {
        0.5 * v * v - v
    }
    fn second(v: f64) -> f64 {
        0.1 * v * v * v
    }
}

impl Predictor for AdditiveModel {
    fn task(&self) -> Task {
        Task::Regression
    }
    fn n_features(&self) -> usize {
        2
    }
    fn values(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter()
            .map(|row| Self::first(row[0]) + Self::second(row[1]))
            .collect()
    }
    fn probabilities(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|_| vec![1.0]).collect()
    }
}

fn lime_recovery(check: &mut Check) {
    let mut r = rng(1111);
    let spreads = [1.5, 0.9, 2.2];
    let cloud: Vec<Vec<f64>> = (0..600)
        .map(|_| spreads.iter().map(|s| r.random_range(-s..*s)).collect())
        .collect();
    let scaler = ScalerParams::fit(&cloud);
    let model = AffineModel {
        w: vec![3.0, -2.0, 0.5],
        b: 1.25,
    };
    let explanation = lime_explain(
        &model,
        &[0.8, -0.3, 1.7],
        &scaler,
        &LimeConfig {
            n_samples: 5000,
            kernel_width: None,
            seed: 2024,
            target_class: None,
        },
    )
    .expect("affine model explains cleanly");
    for (j, (&got, &want)) in explanation.weights.iter().zip(&model.w).enumerate() {
        check.ok((got - want).abs() <= 0.05 * want.abs(), || {
            format!("lime weight[{j}]: {got} vs {want} (5% bound)")
        });
    }
    check.ok(
        (explanation.intercept - model.b).abs() <= 0.05 * model.b.abs().max(1.0),
        || format!("lime intercept: {} vs {}", explanation.intercept, model.b),
    );
}

fn pdp_additivity(check: &mut Check) {
    let mut r = rng(1212);
    let x: Vec<Vec<f64>> = (0..300)
        .map(|_| vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)])
        .collect();
    let model = AdditiveModel;
    let components: [fn(f64) -> f64; 2] = [AdditiveModel::first, AdditiveModel::second];
    for (feature, component) in components.iter().enumerate() {
        let curve = pdp(&model, &x, feature, 12).expect("continuous column sweeps");
        check.ok(!curve.single_point, || {
            format!("pdp feature {feature} collapsed")
        });
        let base = curve.values[0][0];
        for (g, (&grid, value)) in curve.grid.iter().zip(&curve.values).enumerate() {
            let got = value[0] - base;
            let want = component(grid) - component(curve.grid[0]);
            check.ok((got - want).abs() < 1e-9, || {
                format!("pdp feature {feature} grid {g}: offset {got} vs component {want}")
            });
        }
    }
}

fn importance_null_feature(check: &mut Check) {
    let mut r = rng(4242);
    let n = 240;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)])
        .collect();
    let names = vec!["signal".to_string(), "noise".to_string()];

    // A tree fit on a step of the first feature never touches the second,
    // so shuffling the second must change nothing at all.
    let step_y: Vec<f64> = x
        .iter()
        .map(|row| if row[0] > 0.3 { 4.0 } else { 1.0 })
        .collect();
    let spec = ModelSpec::new(Family::Cart, Task::Regression, 0).expect("cart regresses");
    let data = frame(Task::Regression, x.clone(), step_y.clone(), 0);
    let cart = fit(&spec, &data).expect("step target splits cleanly");
    let table = permutation_importance(&cart, &x, &step_y, &names, 7, 99).expect("aligned inputs");
    let noise_row = table
        .rows
        .iter()
        .find(|row| row.feature == 1)
        .expect("two rows");
    check.ok(
        noise_row.mean_drop == 0.0 && noise_row.std_drop == 0.0,
        || {
            format!(
                "cart ignored-feature importance: mean {} std {} (both must be exactly 0)",
                noise_row.mean_drop, noise_row.std_drop
            )
        },
    );
    let signal_row = table
        .rows
        .iter()
        .find(|row| row.feature == 0)
        .expect("two rows");
    check.ok(signal_row.mean_drop > 0.1, || {
        format!("cart signal importance too small: {}", signal_row.mean_drop)
    });

    // A ridge fit estimates a small nonzero weight for the noise column;
    // its importance must be statistically indistinguishable from zero.
    let noisy_y: Vec<f64> = x
        .iter()
        .map(|row| 2.5 * row[0] + r.random_range(-0.5..0.5))
        .collect();
    let spec = ModelSpec::new(Family::Ridge, Task::Regression, 0).expect("ridge regresses");
    let data = frame(Task::Regression, x.clone(), noisy_y.clone(), 0);
    let ridge = fit(&spec, &data).expect("well-conditioned design");
    let table =
        permutation_importance(&ridge, &x, &noisy_y, &names, 10, 99).expect("aligned inputs");
    let noise_row = table
        .rows
        .iter()
        .find(|row| row.feature == 1)
        .expect("two rows");
    check.ok(
        noise_row.mean_drop.abs() <= 2.0 * noise_row.std_drop + 1e-12,
        || {
            format!(
                "ridge ignored-feature importance: mean {} exceeds 2 std ({})",
                noise_row.mean_drop, noise_row.std_drop
            )
        },
    );
}

fn criterion_3() -> Verdict {
    let started = Instant::now();
    let mut check = Check::new();
    lime_recovery(&mut check);
    pdp_additivity(&mut check);
    importance_null_feature(&mut check);
    let elapsed = started.elapsed();
    check.ok(elapsed < Duration::from_secs(60), || {
        format!("explanation suite took {elapsed:.1?}, budget 60s")
    });
    check.verdict(format!(
        "affine recovery at 5000 samples, additive sweeps, null-feature importance in {elapsed:.1?}"
    ))
}

// ============================================== snapshot-replay criteria 4-8

/// Everything criteria 4-8 read, computed once from the snapshot table with
/// the pipeline's default settings (5 folds, seed 42, DAQI bands, nothing
/// excluded).
struct SnapshotRun {
    n_records: usize,
    correlations: BTreeMap<String, f64>,
    cluster_record_counts: [usize; 2],
    cluster_country_counts: [usize; 2],
    cluster_difference_count: usize,
    rf_regression_cv: f64,
    rf_classification_cv: f64,
    cart_regression_cv: f64,
    cart_train_r2: f64,
    confusion: ConfusionMatrix,
    train_mcc: Mcc,
    mean_nrmse: f64,
    above_count: usize,
    country_count: usize,
    case_country: Option<String>,
    regression_projection: Option<ProjectionResult>,
    classification_projection: Option<ProjectionResult>,
    top_regression_feature: String,
    top_classification_feature: String,
}

enum SnapshotState {
    Absent,
    Failed(String),
    Ready(Box<SnapshotRun>),
}

fn snapshot_path() -> Option<PathBuf> {
    if let Ok(path) = std::env::var("AQICAST_SNAPSHOT") {
        let path = PathBuf::from(path);
        if path.exists() {
            return Some(path);
        }
    }
    let local = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/WorldWeatherRepository.csv");
    local.exists().then_some(local)
}

fn snapshot() -> &'static SnapshotState {
    static STATE: OnceLock<SnapshotState> = OnceLock::new();
    STATE.get_or_init(|| {
        let Some(path) = snapshot_path() else {
            return SnapshotState::Absent;
        };
        match load_snapshot(&path) {
            Ok(run) => SnapshotState::Ready(Box::new(run)),
            Err(e) => SnapshotState::Failed(e),
        }
    })
}

fn load_snapshot(path: &Path) -> Result<SnapshotRun, String> {
    let raw = parse_csv(path).map_err(|e| format!("parsing snapshot: {e}"))?;
    let (records, _report) = clean(&raw).map_err(|e| format!("cleaning snapshot: {e}"))?;
    if records.is_empty() {
        return Err("snapshot cleaned to zero records".to_string());
    }

    let corr = eda::pearson_matrix(&records).map_err(|e| format!("correlation: {e}"))?;
    let target = corr.labels.len() - 1;
    let correlations: BTreeMap<String, f64> = corr
        .labels
        .iter()
        .enumerate()
        .map(|(j, label)| (label.clone(), corr.values[target][j]))
        .collect();

    let (matrix, _scaler) = eda::standardize(&records).map_err(|e| format!("scaling: {e}"))?;
    let run = eda::kmeans(&matrix, 2, 42).map_err(|e| format!("clustering: {e}"))?;
    let summary = eda::summarize_clusters(&records, &run.assignments)
        .map_err(|e| format!("clusters: {e}"))?;

    let case_country = resolve_case_country(&records);
    let n_records = records.len();
    let series = group_by_country(records);
    let map = BandMap::default_daqi();
    let regression = build_supervised(&series, Task::Regression, &map, &[])
        .map_err(|e| format!("dataset: {e}"))?;
    let classification = build_supervised(&series, Task::Classification, &map, &[])
        .map_err(|e| format!("dataset: {e}"))?;

    let rf_reg =
        ModelSpec::new(Family::RandomForest, Task::Regression, 42).expect("forest regresses");
    let rf_clf =
        ModelSpec::new(Family::RandomForest, Task::Classification, 42).expect("forest classifies");
    let cart_reg = ModelSpec::new(Family::Cart, Task::Regression, 42).expect("cart regresses");

    let reg_plan = kfold(regression.n_rows(), 5, 42).map_err(|e| format!("folds: {e}"))?;
    let clf_plan = kfold(classification.n_rows(), 5, 42).map_err(|e| format!("folds: {e}"))?;
    let rf_regression_cv = cross_val(&rf_reg, &regression, &reg_plan)
        .map_err(|e| format!("forest regression cv: {e}"))?
        .mean;
    let rf_classification_cv = cross_val(&rf_clf, &classification, &clf_plan)
        .map_err(|e| format!("forest classification cv: {e}"))?
        .mean;
    let cart_regression_cv = cross_val(&cart_reg, &regression, &reg_plan)
        .map_err(|e| format!("cart cv: {e}"))?
        .mean;

    let cart_model = fit(&cart_reg, &regression).map_err(|e| format!("cart fit: {e}"))?;
    let cart_train_r2 = regression_scores(
        &regression.y,
        &cart_model
            .predict(&regression.x)
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?
    .r2;

    let rf_reg_model = fit(&rf_reg, &regression).map_err(|e| format!("forest fit: {e}"))?;
    let rf_clf_model = fit(&rf_clf, &classification).map_err(|e| format!("forest fit: {e}"))?;

    let (mean_nrmse, above_count, country_count) =
        match round2(&rf_reg_model, &regression, 0.10).map_err(|e| e.to_string())? {
            Round2::Regression {
                mean_nrmse,
                above_count,
                countries,
                ..
            } => (mean_nrmse, above_count, countries.len()),
            Round2::Classification { .. } => unreachable!("regression dataset"),
        };
    let (confusion, train_mcc) =
        match round2(&rf_clf_model, &classification, 0.10).map_err(|e| e.to_string())? {
            Round2::Classification { confusion, mcc, .. } => (confusion, mcc),
            Round2::Regression { .. } => unreachable!("classification dataset"),
        };

    let (regression_projection, classification_projection) = match &case_country {
        Some(country) => (
            Some(
                project_next_day(&rf_reg, &series, country, &map, &[])
                    .map_err(|e| format!("projection: {e}"))?,
            ),
            Some(
                project_next_day(&rf_clf, &series, country, &map, &[])
                    .map_err(|e| format!("projection: {e}"))?,
            ),
        ),
        None => (None, None),
    };

    let reg_importance = permutation_importance(
        &rf_reg_model,
        &regression.x,
        &regression.y,
        &regression.feature_names,
        5,
        42,
    )
    .map_err(|e| format!("importance: {e}"))?;
    let clf_importance = permutation_importance(
        &rf_clf_model,
        &classification.x,
        &classification.y,
        &classification.feature_names,
        5,
        42,
    )
    .map_err(|e| format!("importance: {e}"))?;

    Ok(SnapshotRun {
        n_records,
        correlations,
        cluster_record_counts: summary.record_counts,
        cluster_country_counts: [summary.countries[0].len(), summary.countries[1].len()],
        cluster_difference_count: summary.difference_countries.len(),
        rf_regression_cv,
        rf_classification_cv,
        cart_regression_cv,
        cart_train_r2,
        confusion,
        train_mcc,
        mean_nrmse,
        above_count,
        country_count,
        case_country,
        regression_projection,
        classification_projection,
        top_regression_feature: reg_importance.rows[0].name.clone(),
        top_classification_feature: clf_importance.rows[0].name.clone(),
    })
}

/// The case study targets Kinshasa; in the snapshot the record's country is
/// the Democratic Republic of the Congo under one spelling or another, so
/// resolve it by name rather than hard-coding one variant.
fn resolve_case_country(records: &[aqicast_core::ingest::CleanRecord]) -> Option<String> {
    let countries: BTreeSet<&str> = records.iter().map(|r| r.country.as_str()).collect();
    let congos: Vec<&str> = countries
        .iter()
        .copied()
        .filter(|c| c.to_lowercase().contains("congo"))
        .collect();
    congos
        .iter()
        .copied()
        .find(|c| {
            let lower = c.to_lowercase();
            lower.contains("democratic") || lower.contains("kinshasa")
        })
        .or_else(|| (congos.len() == 1).then(|| congos[0]))
        .map(str::to_string)
}

const SKIP_DETAIL: &str =
    "snapshot not present (set AQICAST_SNAPSHOT or add data/WorldWeatherRepository.csv)";

/// Wraps a snapshot-dependent criterion body in the shared gating.
fn with_snapshot(body: impl FnOnce(&SnapshotRun, &mut Check)) -> Verdict {
    match snapshot() {
        SnapshotState::Absent => Verdict::Skip(SKIP_DETAIL.to_string()),
        SnapshotState::Failed(e) => Verdict::Fail(format!("snapshot run failed: {e}")),
        SnapshotState::Ready(run) => {
            let mut check = Check::new();
            body(run, &mut check);
            match check.verdict(String::new()) {
                Verdict::Pass(_) => Verdict::Pass(String::new()),
                other => other,
            }
        }
    }
}

fn criterion_4() -> Verdict {
    match with_snapshot(|run, check| {
        check.ok(!run.train_mcc.degenerate, || {
            "training MCC degenerate".to_string()
        });
        check.close("training MCC", run.train_mcc.value, 1.0, 1e-9);
        let off_diagonal: u64 = run
            .confusion
            .counts
            .iter()
            .enumerate()
            .map(|(p, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(a, _)| a != p)
                    .map(|(_, &c)| c)
                    .sum::<u64>()
            })
            .sum();
        check.ok(off_diagonal == 0, || {
            format!("confusion has {off_diagonal} off-diagonal rows")
        });
        let expected_supports = [219.0, 10167.0, 708.0, 787.0];
        check.ok(run.confusion.supports.len() == 4, || {
            format!("expected 4 classes, got {}", run.confusion.supports.len())
        });
        for (class, (&got, &want)) in run
            .confusion
            .supports
            .iter()
            .zip(&expected_supports)
            .enumerate()
        {
            check.ok((got as f64 - want).abs() <= 0.02 * want, || {
                format!("support class {class}: {got} vs {want} ± 2%")
            });
        }
    }) {
        Verdict::Pass(_) => match snapshot() {
            SnapshotState::Ready(run) => Verdict::Pass(format!(
                "training MCC {:.4}, all-diagonal confusion, supports {:?}",
                run.train_mcc.value, run.confusion.supports
            )),
            _ => unreachable!("pass implies a loaded snapshot"),
        },
        other => other,
    }
}

fn criterion_5() -> Verdict {
    match with_snapshot(|run, check| {
        check.close("forest classification cv", run.rf_classification_cv, 0.89, 0.05);
        check.close("forest regression cv", run.rf_regression_cv, 0.38, 0.10);
        check.ok(run.cart_train_r2 >= 0.999, || {
            format!("cart train R² {} (expected ≥ 0.999)", run.cart_train_r2)
        });
        check.ok(run.cart_regression_cv < 0.1, || {
            format!("cart cv {} (expected < 0.1)", run.cart_regression_cv)
        });
        let gap = run.rf_classification_cv - run.rf_regression_cv;
        check.ok(gap >= 0.3, || {
            format!("classification-over-regression gap {gap:.3} (expected ≥ 0.3)")
        });
    }) {
        Verdict::Pass(_) => match snapshot() {
            SnapshotState::Ready(run) => Verdict::Pass(format!(
                "classification cv {:.3}, regression cv {:.3}, cart overfit (train R² {:.4}, cv {:.3})",
                run.rf_classification_cv, run.rf_regression_cv, run.cart_train_r2, run.cart_regression_cv
            )),
            _ => unreachable!("pass implies a loaded snapshot"),
        },
        other => other,
    }
}

fn criterion_6() -> Verdict {
    match with_snapshot(|run, check| {
        check.close("mean per-country nRMSE", run.mean_nrmse, 0.089, 0.03);
        check.ok((run.above_count as f64 - 73.0).abs() <= 15.0, || {
            format!(
                "{} countries above threshold (expected 73 ± 15)",
                run.above_count
            )
        });
    }) {
        Verdict::Pass(_) => match snapshot() {
            SnapshotState::Ready(run) => Verdict::Pass(format!(
                "mean nRMSE {:.4}, {}/{} countries above 10%",
                run.mean_nrmse, run.above_count, run.country_count
            )),
            _ => unreachable!("pass implies a loaded snapshot"),
        },
        other => other,
    }
}

fn criterion_7() -> Verdict {
    match with_snapshot(|run, check| {
        let Some(country) = &run.case_country else {
            check.ok(false, || {
                "no Congo country resolved in the snapshot".to_string()
            });
            return;
        };
        let regression = run
            .regression_projection
            .as_ref()
            .expect("resolved country projects");
        let classification = run
            .classification_projection
            .as_ref()
            .expect("resolved country projects");
        let _ = country;

        match &regression.holdout {
            Some(holdout) => check.close(
                "holdout regression prediction",
                holdout.prediction.value,
                3.28,
                0.5,
            ),
            None => check.ok(false, || {
                "regression holdout missing (gap before last day)".to_string()
            }),
        }
        check.close(
            "scenario regression prediction",
            regression.scenario.value,
            3.61,
            0.7,
        );
        match &classification.holdout {
            Some(holdout) => check.ok(holdout.prediction.value == 1.0, || {
                format!("holdout class {} (expected 1)", holdout.prediction.value)
            }),
            None => check.ok(false, || "classification holdout missing".to_string()),
        }
        check.ok(classification.scenario.value == 1.0, || {
            format!(
                "scenario class {} (expected 1)",
                classification.scenario.value
            )
        });
    }) {
        Verdict::Pass(_) => match snapshot() {
            SnapshotState::Ready(run) => {
                let regression = run
                    .regression_projection
                    .as_ref()
                    .expect("passing run projects");
                let counts: Vec<u64> = regression.class_counts.iter().map(|c| c.count).collect();
                Verdict::Pass(format!(
                    "{}: holdout {:.2}, scenario {:.2}, classification Low both dates; observed band counts {:?}",
                    run.case_country.as_deref().unwrap_or("?"),
                    regression.holdout.as_ref().map(|h| h.prediction.value).unwrap_or(f64::NAN),
                    regression.scenario.value,
                    counts
                ))
            }
            _ => unreachable!("pass implies a loaded snapshot"),
        },
        other => other,
    }
}

fn criterion_8() -> Verdict {
    match with_snapshot(|run, check| {
        let expectations = [
            ("air_quality_PM2.5", 0.94),
            ("air_quality_PM10", 0.92),
            ("air_quality_Carbon_Monoxide", 0.84),
            ("air_quality_Ozone", -0.068),
        ];
        for (label, want) in expectations {
            match run.correlations.get(label) {
                Some(&got) => check.close(&format!("target vs {label}"), got, want, 0.05),
                None => check.ok(false, || format!("correlation matrix lacks {label}")),
            }
        }
        // Cluster sizes are reported, not asserted: restarts make the split
        // stable but the published run predates this implementation.
    }) {
        Verdict::Pass(_) => match snapshot() {
            SnapshotState::Ready(run) => Verdict::Pass(format!(
                "pollutant correlations within band over {} records; clusters {:?} records / {:?} countries, {} difference countries (reported only)",
                run.n_records,
                run.cluster_record_counts,
                run.cluster_country_counts,
                run.cluster_difference_count
            )),
            _ => unreachable!("pass implies a loaded snapshot"),
        },
        other => other,
    }
}

fn rank_one_importance() -> Verdict {
    match with_snapshot(|run, check| {
        check.ok(
            run.top_regression_feature == "air_quality_gb-defra-index",
            || {
                format!(
                    "top regression importance is {} (expected the current index)",
                    run.top_regression_feature
                )
            },
        );
        check.ok(run.top_classification_feature == "categories", || {
            format!(
                "top classification importance is {} (expected the band feature)",
                run.top_classification_feature
            )
        });
    }) {
        Verdict::Pass(_) => match snapshot() {
            SnapshotState::Ready(run) => Verdict::Pass(format!(
                "regression leads with {}, classification with {}",
                run.top_regression_feature, run.top_classification_feature
            )),
            _ => unreachable!("pass implies a loaded snapshot"),
        },
        other => other,
    }
}

// ---------------------------------------------- criterion 9: the binary

fn collect_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("artifact directory reads") {
            let entry = entry.expect("artifact entry reads");
            let name = entry.file_name().to_string_lossy().into_owned();
            let rel = if prefix.is_empty() {
                name.clone()
            } else {
                format!("{prefix}/{name}")
            };
            let path = entry.path();
            if path.is_dir() {
                walk(&path, &rel, out);
            } else {
                out.insert(rel, fs::read(&path).expect("artifact file reads"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, "", &mut out);
    out
}

fn criterion_9() -> Verdict {
    let mut check = Check::new();
    let dir = tempfile::tempdir().expect("temp dir creates");
    let input = dir.path().join("weather.csv");
    // Snapshot-sized synthetic table: the same country count and span as the
    // published capture, so the runtime bound means something.
    fs::write(
        &input,
        synth::weather_csv(&SynthOptions {
            countries: 197,
            days: 63,
            ..SynthOptions::default()
        }),
    )
    .expect("synthetic table writes");

    let commands: [&[&str]; 7] = [
        &["ingest"],
        &["eda"],
        &["train"],
        &["evaluate"],
        &["explain"],
        &["project", "--country", "Country 000"],
        &["report"],
    ];
    let run_pipeline = |out: &Path| -> Result<Duration, String> {
        let started = Instant::now();
        for command in commands {
            let output = Command::new(env!("CARGO_BIN_EXE_aqicast"))
                .args(command)
                .arg("--input")
                .arg(&input)
                .arg("--out")
                .arg(out)
                .output()
                .map_err(|e| format!("spawning {}: {e}", command[0]))?;
            if !output.status.success() {
                return Err(format!(
                    "{} exited with {:?}: {}",
                    command[0],
                    output.status.code(),
                    String::from_utf8_lossy(&output.stderr)
                ));
            }
        }
        Ok(started.elapsed())
    };

    let first_out = dir.path().join("first");
    let second_out = dir.path().join("second");
    let first = match run_pipeline(&first_out) {
        Ok(elapsed) => elapsed,
        Err(e) => return Verdict::Fail(format!("first run: {e}")),
    };
    if let Err(e) = run_pipeline(&second_out) {
        return Verdict::Fail(format!("second run: {e}"));
    }

    let first_tree = collect_tree(&first_out);
    let second_tree = collect_tree(&second_out);
    check.ok(
        first_tree.keys().collect::<Vec<_>>() == second_tree.keys().collect::<Vec<_>>(),
        || "the two runs wrote different artifact sets".to_string(),
    );
    let mut compared = 0usize;
    for (path, bytes) in &first_tree {
        // The run ledger is the one artifact allowed to differ: it carries
        // the wall-clock timestamp.
        if path == "run_meta.json" {
            continue;
        }
        if let Some(other) = second_tree.get(path) {
            compared += 1;
            check.ok(bytes == other, || format!("{path} differs between runs"));
        }
    }
    check.ok(compared > 20, || {
        format!("only {compared} artifacts compared; the pipeline underproduced")
    });

    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    // The published budget is five minutes on four cores; prorate it to
    // whatever this machine actually has.
    let budget = Duration::from_secs_f64(300.0 * 4.0 / cores as f64);
    check.ok(first <= budget, || {
        format!("pipeline took {first:.1?}, budget {budget:.1?} at {cores} cores")
    });

    check.verdict(format!(
        "197 countries x 63 days: {compared} artifacts byte-identical, run in {first:.1?} (budget {budget:.1?} at {cores} cores)"
    ))
}

// ------------------------------------------------------------------- gate

#[test]
fn acceptance_gate() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("criterion 1 (metric and split oracles)", criterion_1),
        ("criterion 2 (numerical kernels)", criterion_2),
        ("criterion 3 (explanation methods)", criterion_3),
        ("criterion 4 (training-fit confusion)", criterion_4),
        ("criterion 5 (generalizability gap)", criterion_5),
        ("criterion 6 (per-country error profile)", criterion_6),
        ("criterion 7 (Kinshasa case study)", criterion_7),
        ("criterion 8 (correlations and clusters)", criterion_8),
        ("rank-1 importance (snapshot)", rank_one_importance),
        ("criterion 9 (determinism and runtime)", criterion_9),
    ];

    let mut report = String::new();
    let mut failures = 0usize;
    for (name, run) in criteria {
        let (tag, detail) = match run() {
            Verdict::Pass(detail) => ("PASS", detail),
            Verdict::Skip(detail) => ("SKIP", detail),
            Verdict::Fail(detail) => {
                failures += 1;
                ("FAIL", detail)
            }
        };
        let line = if detail.is_empty() {
            format!("{name}: {tag}")
        } else {
            format!("{name}: {tag} — {detail}")
        };
        println!("{line}");
        writeln!(report, "{line}").expect("string writes");
    }

    assert!(failures == 0, "{failures} criteria failed\n{report}");
}
