//! From-scratch random-forest regression with split-node statistics exposed.
//!
//! Trees are grown greedily on the variance-reduction (MSE) criterion.
//! Every internal node keeps a [`SplitRecord`] with the exact training-target
//! means and counts of its two partition classes, which is what the
//! traversal-rate trend estimators consume. The left partition always holds
//! samples with feature value less than or equal to the threshold.

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Error;
use crate::rng::SeededRng;
use crate::Result;

/// Hyperparameters for forest fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until purity or the sample-count floors stop splitting.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Features considered per split; `None` selects `ceil(d / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry.unwrap_or(d.div_ceil(3)).max(1)
    }
}

/// Full statistics of one internal split node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub feature_index: usize,
    pub threshold: f64,
    /// Mean training target over samples with feature value <= threshold.
    pub left_mean: f64,
    pub right_mean: f64,
    pub left_count: usize,
    pub right_count: usize,
    /// Variance decrease weighted by the node's share of the tree's samples.
    pub impurity_decrease: f64,
}

/// Strict binary regression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        record: SplitRecord,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn count(&self) -> usize {
        match self {
            TreeNode::Leaf { count, .. } => *count,
            TreeNode::Split { record, .. } => record.left_count + record.right_count,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Routes a feature vector to its leaf value (left iff value <= threshold).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { record, left, right } => {
                    node = if x[record.feature_index] <= record.threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Preorder visit of every split record.
    pub fn visit_splits<'a>(&'a self, visit: &mut impl FnMut(&'a SplitRecord)) {
        if let TreeNode::Split { record, left, right } = self {
            visit(record);
            left.visit_splits(visit);
            right.visit_splits(visit);
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A fitted ensemble. Prediction is the mean of per-tree predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    /// Indices never drawn into each tree's bootstrap sample; `None` when
    /// bootstrap is off.
    pub oob_indices: Option<Vec<Vec<usize>>>,
    pub n_train: usize,
}

impl Forest {
    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    /// Predictions for every row of a dataset (must have the same features).
    pub fn predict_dataset(&self, ds: &Dataset) -> Vec<f64> {
        let mut x = vec![0.0; ds.d()];
        (0..ds.n())
            .map(|i| {
                for (j, col) in ds.columns().iter().enumerate() {
                    x[j] = col[i];
                }
                self.predict(&x)
            })
            .collect()
    }

    /// Every split on `feature_index` across all trees, in (tree, preorder)
    /// order. Empty when the feature is never used.
    pub fn splits_for_feature(&self, feature_index: usize) -> Vec<SplitRecord> {
        let mut out = Vec::new();
        for tree in &self.trees {
            tree.visit_splits(&mut |rec| {
                if rec.feature_index == feature_index {
                    out.push(rec.clone());
                }
            });
        }
        out
    }

    /// Per-feature sum of sample-weighted impurity decreases, averaged over
    /// trees and normalized to sum 1. All zeros when no tree ever split.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let d = self.d();
        let mut totals = vec![0.0; d];
        for tree in &self.trees {
            tree.visit_splits(&mut |rec| {
                totals[rec.feature_index] += rec.impurity_decrease;
            });
        }
        let n_trees = self.trees.len() as f64;
        for t in totals.iter_mut() {
            *t /= n_trees;
        }
        let sum: f64 = totals.iter().sum();
        if sum > 0.0 {
            for t in totals.iter_mut() {
                *t /= sum;
            }
        }
        totals
    }

    pub fn has_splits(&self) -> bool {
        self.trees.iter().any(|t| !t.is_leaf())
    }
}

struct GrowContext<'a> {
    columns: &'a [Vec<f64>],
    target: &'a [f64],
    mtry: usize,
    min_samples_leaf: usize,
    min_samples_split: usize,
    max_depth: Option<usize>,
    n_root: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
    left_sum: f64,
    left_count: usize,
}

/// Fits a forest. Trees train in parallel; each tree derives its own RNG
/// stream from `(seed, tree_index)`, so the result is identical for any
/// worker count.
pub fn fit(ds: &Dataset, config: &ForestConfig) -> Result<Forest> {
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be positive".into()));
    }
    if config.min_samples_split < 2 {
        return Err(Error::InvalidArgument(
            "min_samples_split must be at least 2".into(),
        ));
    }
    if config.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument(
            "min_samples_leaf must be positive".into(),
        ));
    }
    if ds.n() < config.min_samples_split {
        return Err(Error::InvalidArgument(format!(
            "{} rows is below min_samples_split = {}",
            ds.n(),
            config.min_samples_split
        )));
    }
    if let Some(mtry) = config.mtry {
        if mtry == 0 || mtry > ds.d() {
            return Err(Error::InvalidArgument(format!(
                "mtry = {mtry} outside 1..={}",
                ds.d()
            )));
        }
    }

    let n = ds.n();
    let root_rng = SeededRng::new(config.seed, 0);
    let ctx = GrowContext {
        columns: ds.columns(),
        target: ds.target(),
        mtry: config.resolved_mtry(ds.d()),
        min_samples_leaf: config.min_samples_leaf,
        min_samples_split: config.min_samples_split,
        max_depth: config.max_depth,
        n_root: n,
    };

    let grown: Vec<(TreeNode, Vec<usize>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = root_rng.child(t as u64);
            let (mut indices, oob) = if config.bootstrap {
                let mut in_bag = vec![false; n];
                let indices: Vec<usize> = (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect();
                let oob = (0..n).filter(|&i| !in_bag[i]).collect();
                (indices, oob)
            } else {
                ((0..n).collect(), Vec::new())
            };
            let tree = grow(&ctx, &mut indices, 0, &mut rng);
            (tree, oob)
        })
        .collect();

    let (trees, oob): (Vec<_>, Vec<_>) = grown.into_iter().unzip();
    Ok(Forest {
        trees,
        config: config.clone(),
        feature_names: ds.feature_names().to_vec(),
        oob_indices: if config.bootstrap { Some(oob) } else { None },
        n_train: n,
    })
}

fn grow(ctx: &GrowContext, indices: &mut [usize], depth: usize, rng: &mut SeededRng) -> TreeNode {
    let count = indices.len();
    let sum: f64 = indices.iter().map(|&i| ctx.target[i]).sum();
    let sq_sum: f64 = indices.iter().map(|&i| ctx.target[i] * ctx.target[i]).sum();
    let mean = sum / count as f64;
    let node_sse = (sq_sum - sum * sum / count as f64).max(0.0);

    let depth_reached = ctx.max_depth.is_some_and(|limit| depth >= limit);
    let pure = node_sse <= 1e-12 * sq_sum.max(1e-300);
    if count < ctx.min_samples_split || count < 2 * ctx.min_samples_leaf || depth_reached || pure {
        return TreeNode::Leaf { value: mean, count };
    }

    let best = match find_best_split(ctx, indices, node_sse, rng) {
        Some(b) => b,
        None => return TreeNode::Leaf { value: mean, count },
    };

    // Partition in place: left block first, preserving relative order.
    let column = &ctx.columns[best.feature];
    let mut scratch: Vec<usize> = Vec::with_capacity(count);
    let mut left_end = 0usize;
    for k in 0..count {
        let i = indices[k];
        if column[i] <= best.threshold {
            indices[left_end] = i;
            left_end += 1;
        } else {
            scratch.push(i);
        }
    }
    indices[left_end..].copy_from_slice(&scratch);
    debug_assert_eq!(left_end, best.left_count);

    let right_count = count - best.left_count;
    let record = SplitRecord {
        feature_index: best.feature,
        threshold: best.threshold,
        left_mean: best.left_sum / best.left_count as f64,
        right_mean: (sum - best.left_sum) / right_count as f64,
        left_count: best.left_count,
        right_count,
        impurity_decrease: best.score / ctx.n_root as f64,
    };

    let (left_idx, right_idx) = indices.split_at_mut(best.left_count);
    let left = grow(ctx, left_idx, depth + 1, rng);
    let right = grow(ctx, right_idx, depth + 1, rng);
    TreeNode::Split {
        record,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Scans an mtry-subset of features for the threshold with maximal SSE
/// reduction. Candidate thresholds are midpoints between consecutive distinct
/// sorted values; ties in the criterion keep the lowest feature index, then
/// the lowest threshold (features and thresholds are scanned in ascending
/// order and a new best must be strictly better).
fn find_best_split(
    ctx: &GrowContext,
    indices: &mut [usize],
    node_sse: f64,
    rng: &mut SeededRng,
) -> Option<BestSplit> {
    let d = ctx.columns.len();
    let count = indices.len();
    let mut features: Vec<usize> = index_sample(rng, d, ctx.mtry.min(d)).into_vec();
    features.sort_unstable();

    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<usize> = Vec::with_capacity(count);
    for &f in &features {
        let column = &ctx.columns[f];
        sorted.clear();
        sorted.extend_from_slice(indices);
        sorted.sort_unstable_by(|&a, &b| column[a].total_cmp(&column[b]));

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let total_sum: f64 = sorted.iter().map(|&i| ctx.target[i]).sum();
        let total_sq: f64 = sorted.iter().map(|&i| ctx.target[i] * ctx.target[i]).sum();

        for pos in 1..count {
            let prev = sorted[pos - 1];
            left_sum += ctx.target[prev];
            left_sq += ctx.target[prev] * ctx.target[prev];
            let (lo, hi) = (column[prev], column[sorted[pos]]);
            if lo >= hi {
                continue; // not a boundary between distinct values
            }
            if pos < ctx.min_samples_leaf || count - pos < ctx.min_samples_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let left_sse = left_sq - left_sum * left_sum / pos as f64;
            let right_sse = right_sq - right_sum * right_sum / (count - pos) as f64;
            let score = node_sse - left_sse.max(0.0) - right_sse.max(0.0);
            if score <= 0.0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: 0.5 * (lo + hi),
                    score,
                    left_sum,
                    left_count: pos,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(cols: Vec<Vec<f64>>, target: Vec<f64>) -> Dataset {
        let names = (0..cols.len()).map(|i| format!("x{i}")).collect();
        Dataset::new(names, cols, "y".into(), target).unwrap()
    }

    fn gaussian_column(n: usize, rng: &mut SeededRng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn r_squared(pred: &[f64], y: &[f64]) -> f64 {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = pred.iter().zip(y).map(|(p, t)| (t - p) * (t - p)).sum();
        let ss_tot: f64 = y.iter().map(|t| (t - mean) * (t - mean)).sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn memorizes_identity_signal() {
        let mut rng = SeededRng::new(5, 0);
        let x = gaussian_column(100, &mut rng);
        let ds = dataset(vec![x.clone()], x.clone());
        let f = fit(&ds, &ForestConfig::default().with_seed(1)).unwrap();
        let preds = f.predict_dataset(&ds);
        assert!(r_squared(&preds, ds.target()) > 0.99);
    }

    #[test]
    fn single_leaf_predicts_mean() {
        let ds = dataset(vec![vec![1.0, 2.0, 3.0, 4.0]], vec![1.0, 5.0, 3.0, 7.0]);
        let config = ForestConfig {
            max_depth: Some(0),
            bootstrap: false,
            n_trees: 3,
            ..ForestConfig::default()
        };
        let f = fit(&ds, &config).unwrap();
        for x in [0.0, 2.5, 100.0] {
            assert_eq!(f.predict(&[x]), 4.0);
        }
        assert!(!f.has_splits());
    }

    #[test]
    fn same_seed_same_forest() {
        let mut rng = SeededRng::new(11, 0);
        let cols = vec![gaussian_column(60, &mut rng), gaussian_column(60, &mut rng)];
        let y: Vec<f64> = (0..60).map(|i| cols[0][i] * 2.0 + cols[1][i]).collect();
        let ds = dataset(cols, y);
        let config = ForestConfig {
            n_trees: 12,
            ..ForestConfig::default()
        }
        .with_seed(99);
        let a = fit(&ds, &config).unwrap();
        let b = fit(&ds, &config).unwrap();
        assert_eq!(a, b);
        let c = fit(&ds, &config.clone().with_seed(100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unbounded_tree_memorizes_unique_rows() {
        // Single tree, no bootstrap, unique feature values: every training
        // point predicts its own target.
        let mut rng = SeededRng::new(3, 0);
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y = gaussian_column(40, &mut rng);
        let ds = dataset(vec![x.clone()], y.clone());
        let config = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            mtry: Some(1),
            ..ForestConfig::default()
        };
        let f = fit(&ds, &config).unwrap();
        for i in 0..40 {
            assert!((f.predict(&[x[i]]) - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_records_conserve_target_mass() {
        let mut rng = SeededRng::new(21, 0);
        let cols = vec![gaussian_column(80, &mut rng), gaussian_column(80, &mut rng)];
        let y: Vec<f64> = (0..80).map(|i| cols[0][i] - 0.5 * cols[1][i]).collect();
        let ds = dataset(cols, y);
        let config = ForestConfig {
            n_trees: 5,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let f = fit(&ds, &config).unwrap();

        // Walk each tree alongside the training rows it saw (no bootstrap:
        // all rows) and check each record against a recount from the data.
        fn check(node: &TreeNode, rows: &[usize], ds: &Dataset) {
            if let TreeNode::Split { record, left, right } = node {
                let col = ds.column(record.feature_index);
                let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| col[i] <= record.threshold);
                assert_eq!(l_rows.len(), record.left_count);
                assert_eq!(r_rows.len(), record.right_count);
                let l_mean: f64 =
                    l_rows.iter().map(|&i| ds.target()[i]).sum::<f64>() / l_rows.len() as f64;
                let r_mean: f64 =
                    r_rows.iter().map(|&i| ds.target()[i]).sum::<f64>() / r_rows.len() as f64;
                assert!((l_mean - record.left_mean).abs() < 1e-9 * (1.0 + l_mean.abs()));
                assert!((r_mean - record.right_mean).abs() < 1e-9 * (1.0 + r_mean.abs()));
                // mass conservation
                let node_sum = record.left_count as f64 * record.left_mean
                    + record.right_count as f64 * record.right_mean;
                let direct: f64 = rows.iter().map(|&i| ds.target()[i]).sum();
                assert!((node_sum - direct).abs() < 1e-9 * (1.0 + direct.abs()));
                check(left, &l_rows, ds);
                check(right, &r_rows, ds);
            }
        }
        let all: Vec<usize> = (0..80).collect();
        for tree in &f.trees {
            check(tree, &all, &ds);
        }
    }

    #[test]
    fn chosen_split_matches_brute_force() {
        // Recompute the root split of a small single tree by brute force over
        // every (feature, threshold) candidate.
        let mut rng = SeededRng::new(77, 0);
        for trial in 0..10u64 {
            let mut local = rng.child(trial);
            let n = 30;
            let cols = vec![gaussian_column(n, &mut local), gaussian_column(n, &mut local)];
            let y: Vec<f64> = (0..n)
                .map(|i| cols[0][i] * 1.5 + cols[1][i] * cols[1][i])
                .collect();
            let ds = dataset(cols, y);
            let config = ForestConfig {
                n_trees: 1,
                bootstrap: false,
                mtry: Some(2), // all features: no sampling effect on the choice
                ..ForestConfig::default()
            };
            let f = fit(&ds, &config).unwrap();
            let TreeNode::Split { record, .. } = &f.trees[0] else {
                panic!("expected a split at the root");
            };

            let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
            for j in 0..ds.d() {
                let col = ds.column(j);
                let mut values: Vec<f64> = col.to_vec();
                values.sort_by(f64::total_cmp);
                for w in values.windows(2) {
                    if w[0] >= w[1] {
                        continue;
                    }
                    let thr = 0.5 * (w[0] + w[1]);
                    let (mut ls, mut lq, mut lc) = (0.0, 0.0, 0usize);
                    let (mut rs, mut rq, mut rc) = (0.0, 0.0, 0usize);
                    for i in 0..n {
                        let t = ds.target()[i];
                        if col[i] <= thr {
                            ls += t;
                            lq += t * t;
                            lc += 1;
                        } else {
                            rs += t;
                            rq += t * t;
                            rc += 1;
                        }
                    }
                    let total_s = ls + rs;
                    let total_q = lq + rq;
                    let sse = total_q - total_s * total_s / n as f64;
                    let score =
                        sse - (lq - ls * ls / lc as f64) - (rq - rs * rs / rc as f64);
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, j, thr));
                    }
                }
            }
            let (_, feature, threshold) = best.unwrap();
            assert_eq!(record.feature_index, feature, "trial {trial}");
            assert!((record.threshold - threshold).abs() < 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let mut rng = SeededRng::new(2, 0);
        let cols = vec![gaussian_column(50, &mut rng)];
        let y = gaussian_column(50, &mut rng);
        let ds = dataset(cols, y);
        let f = fit(
            &ds,
            &ForestConfig {
                n_trees: 7,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let x = [0.3];
        let mean: f64 = f.trees.iter().map(|t| t.predict(&x)).sum::<f64>() / 7.0;
        assert_eq!(f.predict(&x), mean);
    }

    #[test]
    fn impurity_importance_normalizes_and_zeroes_unused() {
        let mut rng = SeededRng::new(31, 0);
        let informative = gaussian_column(120, &mut rng);
        let constant = vec![2.0; 120];
        let y: Vec<f64> = informative.iter().map(|v| 3.0 * v).collect();
        let ds = dataset(vec![informative, constant], y);
        let config = ForestConfig {
            n_trees: 20,
            mtry: Some(2),
            ..ForestConfig::default()
        };
        let f = fit(&ds, &config).unwrap();
        let imp = f.impurity_importance();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(imp[1], 0.0); // constant column can never split
        assert!((imp[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_feature_importance_is_one() {
        let ds = dataset(vec![vec![1.0, 2.0, 3.0, 4.0]], vec![1.0, 2.0, 3.0, 4.0]);
        let f = fit(
            &ds,
            &ForestConfig {
                n_trees: 3,
                bootstrap: false,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        assert_eq!(f.impurity_importance(), vec![1.0]);
    }

    #[test]
    fn all_constant_features_yield_leaf_forest() {
        let ds = dataset(vec![vec![1.0; 10]], (0..10).map(|i| i as f64).collect());
        let f = fit(&ds, &ForestConfig::default()).unwrap();
        assert!(!f.has_splits());
        assert_eq!(f.impurity_importance(), vec![0.0]);
    }

    #[test]
    fn fit_rejects_tiny_datasets() {
        let ds = dataset(vec![vec![1.0]], vec![1.0]);
        assert!(fit(&ds, &ForestConfig::default()).is_err());
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let mut rng = SeededRng::new(8, 0);
        let x = gaussian_column(60, &mut rng);
        let ds = dataset(vec![x.clone()], x);
        let config = ForestConfig {
            n_trees: 4,
            min_samples_leaf: 5,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let f = fit(&ds, &config).unwrap();
        fn walk(node: &TreeNode) {
            match node {
                TreeNode::Leaf { count, .. } => assert!(*count >= 5),
                TreeNode::Split { left, right, .. } => {
                    walk(left);
                    walk(right);
                }
            }
        }
        for tree in &f.trees {
            walk(tree);
        }
    }
}
