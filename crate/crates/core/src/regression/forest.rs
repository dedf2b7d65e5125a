//! Random-forest regressor: bagged variance-minimizing regression trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Number of trees in the forest.
pub const FOREST_TREES: usize = 50;
/// Candidate features drawn (without replacement) at every node: ⌈10/3⌉.
pub const FOREST_MTRY: usize = 4;
/// Nodes with fewer samples than this become leaves.
pub const FOREST_MIN_SPLIT: usize = 5;

const FEATURE_COUNT: usize = 10;

/// One node of a regression tree. Trees are stored as flat arrays with the
/// root at index 0, which keeps (de)serialization and prediction free of
/// recursion no matter how deep a tree grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A single regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Routes `x` from the root to a leaf: left when the split feature is
    /// strictly below the threshold.
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }
}

/// A trained forest plus the seed it was grown from (kept so that
/// out-of-bag bookkeeping can replay the bootstrap draws).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub seed: u64,
}

/// Deterministic per-tree generator: the tree index is spread by an odd
/// multiplier (a bijection of u64) and folded into the forest seed.
fn tree_rng(seed: u64, tree: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tree.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Draws the bootstrap sample for one tree: n draws with replacement.
/// Training and out-of-bag replay must both call this first on a fresh
/// per-tree generator so the draws line up.
fn bootstrap_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Draws [`FOREST_MTRY`] distinct feature indices, in draw order.
fn draw_features(rng: &mut ChaCha8Rng) -> [usize; FOREST_MTRY] {
    let mut pool: [usize; FEATURE_COUNT] = std::array::from_fn(|i| i);
    for i in 0..FOREST_MTRY {
        let j = rng.gen_range(i..FEATURE_COUNT);
        pool.swap(i, j);
    }
    std::array::from_fn(|i| pool[i])
}

/// Sum of squared deviations from the mean, via sums: Σy² − (Σy)²/n.
fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    sum_sq - sum * sum / n
}

/// Finds the variance-minimizing split among `features`: thresholds are
/// the midpoints of consecutive distinct sorted values, scored by the sum
/// of the children's squared deviations. Returns `None` when no candidate
/// strictly improves on the node's own squared deviation.
fn best_split(
    xs: &[[f64; FEATURE_COUNT]],
    ys: &[f64],
    samples: &[usize],
    features: &[usize],
) -> Option<(usize, f64)> {
    let n = samples.len() as f64;
    let sum: f64 = samples.iter().map(|&i| ys[i]).sum();
    let sum_sq: f64 = samples.iter().map(|&i| ys[i] * ys[i]).sum();
    let parent = sse(sum, sum_sq, n);

    let mut best: Option<(usize, f64)> = None;
    let mut best_score = parent;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    for &feature in features {
        pairs.clear();
        pairs.extend(samples.iter().map(|&i| (xs[i][feature], ys[i])));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let (mut lsum, mut lsq) = (0.0f64, 0.0f64);
        for i in 1..pairs.len() {
            let (prev, y) = pairs[i - 1];
            lsum += y;
            lsq += y * y;
            let cur = pairs[i].0;
            if cur <= prev {
                continue;
            }
            let threshold = (prev + cur) / 2.0;
            // A midpoint of adjacent floats can round down onto the lower
            // value, which would leave the left side empty; skip it.
            if threshold <= prev {
                continue;
            }
            let nl = i as f64;
            let score = sse(lsum, lsq, nl) + sse(sum - lsum, sum_sq - lsq, n - nl);
            if score < best_score {
                best_score = score;
                best = Some((feature, threshold));
            }
        }
    }
    best
}

/// Mean of the node's targets, clamped into their range so that rounding
/// in the summation can never push a leaf outside the convex hull of what
/// it saw (predictions must stay within [min target, max target]).
fn leaf_value(ys: &[f64], samples: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &i in samples {
        sum += ys[i];
        lo = lo.min(ys[i]);
        hi = hi.max(ys[i]);
    }
    (sum / samples.len() as f64).clamp(lo, hi)
}

/// Grows one tree on a bootstrap sample with an explicit work stack.
fn train_tree(xs: &[[f64; FEATURE_COUNT]], ys: &[f64], rng: &mut ChaCha8Rng) -> Tree {
    let bootstrap = bootstrap_indices(rng, ys.len());
    let mut nodes = vec![TreeNode::Leaf { value: f64::NAN }];
    let mut stack = vec![(0usize, bootstrap)];
    while let Some((slot, samples)) = stack.pop() {
        let split = if samples.len() < FOREST_MIN_SPLIT {
            None
        } else {
            let features = draw_features(rng);
            best_split(xs, ys, &samples, &features)
        };
        match split {
            None => nodes[slot] = TreeNode::Leaf {
                value: leaf_value(ys, &samples),
            },
            Some((feature, threshold)) => {
                let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
                    .into_iter()
                    .partition(|&i| xs[i][feature] < threshold);
                debug_assert!(!left_samples.is_empty() && !right_samples.is_empty());
                let left = nodes.len();
                let right = left + 1;
                nodes.push(TreeNode::Leaf { value: f64::NAN });
                nodes.push(TreeNode::Leaf { value: f64::NAN });
                nodes[slot] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right, right_samples));
                stack.push((left, left_samples));
            }
        }
    }
    Tree { nodes }
}

fn to_arrays(samples: &[TrainingSample]) -> (Vec<[f64; FEATURE_COUNT]>, Vec<f64>) {
    let xs = samples.iter().map(|s| s.features.to_array()).collect();
    let ys = samples.iter().map(|s| s.target).collect();
    (xs, ys)
}

/// Trains the 50-tree forest. Each tree gets its own deterministic
/// generator, so the result is reproducible for a fixed seed and sample
/// list regardless of thread scheduling.
pub fn train_forest(samples: &[TrainingSample], seed: u64) -> Result<ForestModel> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let (xs, ys) = to_arrays(samples);
    let trees: Vec<Tree> = (0..FOREST_TREES as u64)
        .into_par_iter()
        .map(|t| train_tree(&xs, &ys, &mut tree_rng(seed, t)))
        .collect();
    Ok(ForestModel { trees, seed })
}

/// Bagging aggregation: the mean of the tree outputs, clamped into their
/// range to keep the convex-combination guarantee exact under rounding.
pub fn predict_forest(model: &ForestModel, x: &FeatureVector) -> f64 {
    let x = x.to_array();
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for tree in &model.trees {
        let value = tree.predict(&x);
        sum += value;
        lo = lo.min(value);
        hi = hi.max(value);
    }
    (sum / model.trees.len() as f64).clamp(lo, hi)
}

/// Out-of-bag mean squared error: every sample is predicted by the trees
/// whose bootstrap never drew it (replayed from the stored seed), and the
/// squared errors are averaged. `None` when no sample was left out of any
/// bootstrap. `samples` must be the exact training list.
pub fn oob_mse(model: &ForestModel, samples: &[TrainingSample]) -> Option<f64> {
    let n = samples.len();
    let (xs, ys) = to_arrays(samples);
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0u32; n];
    for (t, tree) in model.trees.iter().enumerate() {
        let mut rng = tree_rng(model.seed, t as u64);
        let mut in_bag = vec![false; n];
        for i in bootstrap_indices(&mut rng, n) {
            in_bag[i] = true;
        }
        for i in 0..n {
            if !in_bag[i] {
                sums[i] += tree.predict(&xs[i]);
                counts[i] += 1;
            }
        }
    }
    let mut err = 0.0;
    let mut covered = 0usize;
    for i in 0..n {
        if counts[i] > 0 {
            let d = sums[i] / counts[i] as f64 - ys[i];
            err += d * d;
            covered += 1;
        }
    }
    (covered > 0).then(|| err / covered as f64)
}
