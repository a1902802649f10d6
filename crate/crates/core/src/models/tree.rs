//! CART-style decision trees over dense `f64` features.
//!
//! Splits are exhaustive: every candidate feature is scanned over the
//! midpoints between consecutive distinct sorted values, scoring variance
//! reduction (regression) or Gini impurity decrease (classification) with
//! prefix sums, so a node costs `O(d * n log n)`. A split must strictly
//! reduce impurity; ties prefer the lowest feature index, then the lowest
//! threshold. Rows route left when `x[feature] <= threshold`.
//!
//! Growth is either depth-first (optionally depth-capped) or best-first to
//! a leaf budget; the boosting presets use one of each.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{SupervisedDataset, Task};

/// Minimum impurity decrease for a split to count as an improvement; keeps
/// floating-point dust from growing spurious branches.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Regression leaf: mean target of the training rows that reached it.
    Leaf { value: f64 },
    /// Classification leaf: class fractions of the training rows.
    LeafDist { dist: Vec<f64> },
}

/// A fitted tree as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn descend(&self, row: &[f64]) -> &Node {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                leaf => return leaf,
            }
        }
    }

    /// Regression prediction; panics on a classification tree.
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match self.descend(row) {
            Node::Leaf { value } => *value,
            _ => panic!("predict_value called on a classification tree"),
        }
    }

    /// Class distribution; panics on a regression tree.
    pub fn predict_dist(&self, row: &[f64]) -> &[f64] {
        match self.descend(row) {
            Node::LeafDist { dist } => dist,
            _ => panic!("predict_dist called on a regression tree"),
        }
    }

    /// Whether any internal node tests the given feature.
    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Split { feature: f, .. } if *f == feature))
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                _ => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Split targets: regression values or class labels, indexed by row.
#[derive(Debug, Clone, Copy)]
pub enum SplitTargets<'a> {
    Variance(&'a [f64]),
    Gini {
        classes: &'a [usize],
        n_classes: usize,
    },
}

/// A chosen split and its impurity decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best split over all rows; `candidates` lists the feature indices to scan
/// (in ascending order for the documented tie-breaking). Returns `None` when
/// no split strictly reduces impurity.
pub fn best_split(x: &[Vec<f64>], targets: SplitTargets, candidates: &[usize]) -> Option<Split> {
    let idx: Vec<usize> = (0..x.len()).collect();
    best_split_at(x, &idx, targets, candidates)
}

fn best_split_at(
    x: &[Vec<f64>],
    idx: &[usize],
    targets: SplitTargets,
    candidates: &[usize],
) -> Option<Split> {
    let mut best: Option<Split> = None;
    for &feature in candidates {
        let found = match targets {
            SplitTargets::Variance(y) => scan_variance(x, idx, y, feature),
            SplitTargets::Gini { classes, n_classes } => {
                scan_gini(x, idx, classes, n_classes, feature)
            }
        };
        if let Some(split) = found {
            // Strictly-greater keeps the earliest feature on ties.
            if best.map_or(true, |b| split.gain > b.gain) {
                best = Some(split);
            }
        }
    }
    best
}

/// Scans one feature for the variance-reduction-maximizing midpoint.
fn scan_variance(x: &[Vec<f64>], idx: &[usize], y: &[f64], feature: usize) -> Option<Split> {
    let n = idx.len();
    let mut pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (x[i][feature], y[i])).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut total_sum = 0.0;
    let mut total_sq = 0.0;
    for &(_, t) in &pairs {
        total_sum += t;
        total_sq += t * t;
    }
    let sse = |sum: f64, sq: f64, count: usize| (sq - sum * sum / count as f64).max(0.0);
    let parent = sse(total_sum, total_sq, n);

    let mut best: Option<Split> = None;
    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    for p in 1..n {
        let (value, target) = pairs[p - 1];
        left_sum += target;
        left_sq += target * target;
        if pairs[p].0 == value {
            continue;
        }
        let gain = (parent
            - sse(left_sum, left_sq, p)
            - sse(total_sum - left_sum, total_sq - left_sq, n - p))
            / n as f64;
        // Strictly-greater keeps the lowest threshold on equal gains.
        if gain > MIN_GAIN && best.map_or(true, |b| gain > b.gain) {
            best = Some(Split {
                feature,
                threshold: (value + pairs[p].0) / 2.0,
                gain,
            });
        }
    }
    best
}

/// Scans one feature for the Gini-decrease-maximizing midpoint.
fn scan_gini(
    x: &[Vec<f64>],
    idx: &[usize],
    classes: &[usize],
    n_classes: usize,
    feature: usize,
) -> Option<Split> {
    let n = idx.len();
    let mut pairs: Vec<(f64, usize)> = idx.iter().map(|&i| (x[i][feature], classes[i])).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut total_counts = vec![0usize; n_classes];
    for &(_, c) in &pairs {
        total_counts[c] += 1;
    }
    let gini = |counts: &[usize], count: usize| {
        1.0 - counts
            .iter()
            .map(|&c| {
                let p = c as f64 / count as f64;
                p * p
            })
            .sum::<f64>()
    };
    let parent = gini(&total_counts, n);

    let mut best: Option<Split> = None;
    let mut left_counts = vec![0usize; n_classes];
    for p in 1..n {
        let (value, class) = pairs[p - 1];
        left_counts[class] += 1;
        if pairs[p].0 == value {
            continue;
        }
        let right_counts: Vec<usize> = total_counts
            .iter()
            .zip(&left_counts)
            .map(|(&t, &l)| t - l)
            .collect();
        let nl = p as f64;
        let nr = (n - p) as f64;
        let gain = parent
            - (nl / n as f64) * gini(&left_counts, p)
            - (nr / n as f64) * gini(&right_counts, n - p);
        if gain > MIN_GAIN && best.map_or(true, |b| gain > b.gain) {
            best = Some(Split {
                feature,
                threshold: (value + pairs[p].0) / 2.0,
                gain,
            });
        }
    }
    best
}

/// Growth bounds shared by the tree-based families.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowControl {
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// When set, growth is best-first up to this many leaves.
    pub max_leaves: Option<usize>,
    /// When set, each node samples this many candidate features.
    pub feature_subset: Option<usize>,
}

pub(crate) fn grow(
    x: &[Vec<f64>],
    idx: Vec<usize>,
    targets: SplitTargets,
    control: &GrowControl,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    debug_assert!(!idx.is_empty(), "cannot grow a tree from zero rows");
    match control.max_leaves {
        Some(budget) => grow_best_first(x, idx, targets, control, rng.as_deref_mut(), budget),
        None => grow_depth_first(x, idx, targets, control, rng.as_deref_mut()),
    }
}

/// Candidate features for one node: all of them, or a seeded sample of
/// `m` distinct indices (ascending, to keep the tie-break rule meaningful).
fn node_candidates(
    d: usize,
    control: &GrowControl,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Vec<usize> {
    match (control.feature_subset, rng) {
        (Some(m), Some(rng)) if m < d => {
            use rand::Rng;
            let mut pool: Vec<usize> = (0..d).collect();
            for i in 0..m {
                let j = rng.random_range(i..d);
                pool.swap(i, j);
            }
            pool.truncate(m);
            pool.sort_unstable();
            pool
        }
        _ => (0..d).collect(),
    }
}

fn is_pure(targets: SplitTargets, idx: &[usize]) -> bool {
    match targets {
        SplitTargets::Variance(y) => idx.windows(2).all(|w| y[w[0]] == y[w[1]]),
        SplitTargets::Gini { classes, .. } => {
            idx.windows(2).all(|w| classes[w[0]] == classes[w[1]])
        }
    }
}

fn make_leaf(targets: SplitTargets, idx: &[usize]) -> Node {
    match targets {
        SplitTargets::Variance(y) => {
            let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            Node::Leaf { value: mean }
        }
        SplitTargets::Gini { classes, n_classes } => {
            let mut dist = vec![0.0; n_classes];
            for &i in idx {
                dist[classes[i]] += 1.0;
            }
            for v in &mut dist {
                *v /= idx.len() as f64;
            }
            Node::LeafDist { dist }
        }
    }
}

fn partition(x: &[Vec<f64>], idx: Vec<usize>, split: &Split) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in idx {
        if x[i][split.feature] <= split.threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    debug_assert!(!left.is_empty() && !right.is_empty());
    (left, right)
}

fn splittable(idx: &[usize], depth: usize, control: &GrowControl, targets: SplitTargets) -> bool {
    idx.len() >= control.min_samples_split
        && control.max_depth.map_or(true, |d| depth < d)
        && !is_pure(targets, idx)
}

/// Depth-first growth with an explicit work stack (trees grown to purity can
/// be deep, so recursion depth must not track tree depth). Children are
/// expanded left before right, which also fixes the RNG draw order for
/// per-node feature sampling.
fn grow_depth_first(
    x: &[Vec<f64>],
    idx: Vec<usize>,
    targets: SplitTargets,
    control: &GrowControl,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let d = x[0].len();
    let mut nodes = vec![Node::Leaf { value: f64::NAN }];
    let mut stack = vec![(idx, 0usize, 0usize)]; // rows, depth, node slot

    while let Some((idx, depth, slot)) = stack.pop() {
        let split = if splittable(&idx, depth, control, targets) {
            let candidates = node_candidates(d, control, &mut rng);
            best_split_at(x, &idx, targets, &candidates)
        } else {
            None
        };
        match split {
            None => nodes[slot] = make_leaf(targets, &idx),
            Some(split) => {
                let (left_idx, right_idx) = partition(x, idx, &split);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: f64::NAN });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: f64::NAN });
                nodes[slot] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                };
                // Push right first so the left child is expanded first.
                stack.push((right_idx, depth + 1, right));
                stack.push((left_idx, depth + 1, left));
            }
        }
    }
    Tree { nodes }
}

/// One pending split in best-first growth, ordered by gain (ties favour the
/// earlier-evaluated node).
struct Candidate {
    split: Split,
    order: u64,
    slot: usize,
    depth: usize,
    idx: Vec<usize>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.split.gain == other.split.gain && self.order == other.order
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.split
            .gain
            .total_cmp(&other.split.gain)
            .then(other.order.cmp(&self.order))
    }
}

/// Best-first (leaf-wise) growth: repeatedly split the leaf with the largest
/// impurity decrease until the leaf budget is reached or nothing improves.
fn grow_best_first(
    x: &[Vec<f64>],
    idx: Vec<usize>,
    targets: SplitTargets,
    control: &GrowControl,
    mut rng: Option<&mut ChaCha8Rng>,
    max_leaves: usize,
) -> Tree {
    let d = x[0].len();
    let mut nodes = vec![make_leaf(targets, &idx)];
    let mut heap = std::collections::BinaryHeap::new();
    let mut order = 0u64;

    let consider = |heap: &mut std::collections::BinaryHeap<Candidate>,
                    rng: &mut Option<&mut ChaCha8Rng>,
                    order: &mut u64,
                    slot: usize,
                    depth: usize,
                    idx: Vec<usize>| {
        if !splittable(&idx, depth, control, targets) {
            return;
        }
        let candidates = node_candidates(d, control, rng);
        if let Some(split) = best_split_at(x, &idx, targets, &candidates) {
            heap.push(Candidate {
                split,
                order: *order,
                slot,
                depth,
                idx,
            });
            *order += 1;
        }
    };

    consider(&mut heap, &mut rng, &mut order, 0, 0, idx);
    let mut leaves = 1;
    while leaves < max_leaves {
        let Some(cand) = heap.pop() else { break };
        let (left_idx, right_idx) = partition(x, cand.idx, &cand.split);
        let left = nodes.len();
        nodes.push(make_leaf(targets, &left_idx));
        let right = nodes.len();
        nodes.push(make_leaf(targets, &right_idx));
        nodes[cand.slot] = Node::Split {
            feature: cand.split.feature,
            threshold: cand.split.threshold,
            left,
            right,
        };
        leaves += 1;
        consider(
            &mut heap,
            &mut rng,
            &mut order,
            left,
            cand.depth + 1,
            left_idx,
        );
        consider(
            &mut heap,
            &mut rng,
            &mut order,
            right,
            cand.depth + 1,
            right_idx,
        );
    }
    Tree { nodes }
}

/// Fits a plain CART on a supervised frame.
pub fn fit_cart(
    data: &SupervisedDataset,
    min_samples_split: usize,
    max_depth: Option<usize>,
) -> Tree {
    let control = GrowControl {
        min_samples_split,
        max_depth,
        max_leaves: None,
        feature_subset: None,
    };
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    match data.task {
        Task::Regression => grow(
            &data.x,
            idx,
            SplitTargets::Variance(&data.y),
            &control,
            None,
        ),
        Task::Classification => {
            let classes = data.classes();
            grow(
                &data.x,
                idx,
                SplitTargets::Gini {
                    classes: &classes,
                    n_classes: data.n_classes,
                },
                &control,
                None,
            )
        }
    }
}
