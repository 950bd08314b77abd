//! Random forest relevance classifier, built from scratch.
//!
//! Each tree trains on a bootstrap sample; every node considers a uniform
//! random subset of ceil(sqrt(d)) features and takes the split with the best
//! Gini impurity decrease. The minimum-samples-to-split knob is the recall
//! lever: raising it leaves leaves impure, and impure leaves that lean
//! relevant still clear a moderate confidence threshold.
//!
//! Trees use an RNG seeded with `seed + tree_index`, so building trees in
//! parallel reproduces the sequential model bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CandgenError, PairFeatures};

/// Class index of "relevant" in the two-class pair model.
pub const RELEVANT_CLASS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub num_trees: usize,
    /// Absolute minimum node size that may still be split; `None` resolves
    /// to `max(2, ceil(0.05 * n))`.
    pub min_samples_split: Option<usize>,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            num_trees: 100,
            min_samples_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_counts(&self, row: &[f64]) -> &[u64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
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
            }
        }
    }

    pub fn is_single_leaf(&self) -> bool {
        self.nodes.len() == 1 && matches!(self.nodes[0], Node::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub version: u32,
    pub num_features: usize,
    pub num_classes: usize,
    /// Training means per feature, used to impute absent values.
    pub imputation: Vec<f64>,
    pub trees: Vec<Tree>,
    pub num_trees: usize,
    pub min_samples_split: usize,
    pub features_per_split: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn gini(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut g = 1.0;
    for &c in counts {
        let p = c as f64 / total as f64;
        g -= p * p;
    }
    g
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [usize],
    num_classes: usize,
    min_samples_split: usize,
    features_per_split: usize,
    num_features: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

impl TreeBuilder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &i in idx {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Uniform random permutation of the feature indices.
    fn feature_permutation(&mut self) -> Vec<usize> {
        let mut all: Vec<usize> = (0..self.num_features).collect();
        for i in (1..all.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            all.swap(i, j);
        }
        all
    }

    /// Best Gini split of one feature, or `None` when it admits no valid
    /// threshold (constant over the node).
    fn best_split_of_feature(&self, idx: &[usize], f: usize) -> Option<(f64, f64)> {
        let parent_counts = self.class_counts(idx);
        let total = idx.len() as u64;
        let parent_gini = gini(&parent_counts, total);
        let mut vals: Vec<(f64, usize)> =
            idx.iter().map(|&i| (self.rows[i][f], self.labels[i])).collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_counts = vec![0u64; self.num_classes];
        let mut best: Option<(f64, f64)> = None;
        for k in 0..vals.len().saturating_sub(1) {
            left_counts[vals[k].1] += 1;
            if vals[k].0 == vals[k + 1].0 {
                continue;
            }
            let threshold = vals[k].0 + (vals[k + 1].0 - vals[k].0) / 2.0;
            let n_left = (k + 1) as u64;
            let n_right = total - n_left;
            let right_counts: Vec<u64> = parent_counts
                .iter()
                .zip(&left_counts)
                .map(|(p, l)| p - l)
                .collect();
            let weighted = (n_left as f64 * gini(&left_counts, n_left)
                + n_right as f64 * gini(&right_counts, n_right))
                / total as f64;
            let decrease = parent_gini - weighted;
            if decrease > 1e-12 && best.map(|(_, d)| decrease > d).unwrap_or(true) {
                best = Some((threshold, decrease));
            }
        }
        best
    }

    /// Scan features in random order until ceil(sqrt(d)) splittable
    /// candidates were evaluated; constant features do not use up the
    /// budget, so a valid split is found whenever one exists.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut evaluated = 0usize;
        for f in self.feature_permutation() {
            if let Some((threshold, decrease)) = self.best_split_of_feature(idx, f) {
                evaluated += 1;
                if best.map(|(_, _, d)| decrease > d).unwrap_or(true) {
                    best = Some((f, threshold, decrease));
                }
                if evaluated >= self.features_per_split {
                    break;
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize]) -> usize {
        let counts = self.class_counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        // A node with at most min_samples_split samples becomes a leaf, so
        // min_samples_split = n forces single-leaf trees.
        if pure || idx.len() <= self.min_samples_split {
            return self.push_leaf(counts);
        }
        let Some((feature, threshold, _)) = self.best_split(idx) else {
            return self.push_leaf(counts);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: vec![] }); // placeholder
        let left = self.build(&left_idx);
        let right = self.build(&right_idx);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    fn push_leaf(&mut self, counts: Vec<u64>) -> usize {
        self.nodes.push(Node::Leaf { counts });
        self.nodes.len() - 1
    }
}

fn train_tree(
    rows: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    min_samples_split: usize,
    features_per_split: usize,
    seed: u64,
) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows.len();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut builder = TreeBuilder {
        rows,
        labels,
        num_classes,
        min_samples_split,
        features_per_split,
        num_features: rows[0].len(),
        nodes: Vec::new(),
        rng,
    };
    builder.build(&bootstrap);
    Tree {
        nodes: builder.nodes,
    }
}

/// Imputation means per feature over present values; all-absent features
/// fall back to 0.
fn imputation_means(features: &[PairFeatures]) -> Vec<f64> {
    let mut sums = [0.0f64; 10];
    let mut counts = vec![0usize; 10];
    for pf in features {
        for (i, v) in pf.values().iter().enumerate() {
            if let Some(x) = v {
                sums[i] += x;
                counts[i] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

fn impute_row(pf: &PairFeatures, means: &[f64]) -> Vec<f64> {
    pf.values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.unwrap_or(means[i]))
        .collect()
}

/// Train the relevance forest on labeled pairs (label `true` = relevant).
/// Single-class data yields a degenerate model that predicts that class,
/// with a warning recorded on the model.
pub fn train_rf(
    features: &[PairFeatures],
    params: &RfParams,
) -> Result<RandomForestModel, CandgenError> {
    let labeled: Vec<&PairFeatures> = features.iter().filter(|p| p.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(CandgenError::NoLabels);
    }
    let means = imputation_means(features);
    let rows: Vec<Vec<f64>> = labeled.iter().map(|p| impute_row(p, &means)).collect();
    let labels: Vec<usize> = labeled
        .iter()
        .map(|p| if p.label.unwrap() { 1 } else { 0 })
        .collect();
    let n = rows.len();
    let num_features = 10usize;
    let min_samples_split = params
        .min_samples_split
        .unwrap_or(((n as f64 * 0.05).ceil() as usize).max(2));
    let features_per_split = (num_features as f64).sqrt().ceil() as usize;

    let mut warnings = Vec::new();
    let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        warnings.push(format!(
            "single-class training data (class {}); model degenerates to the prior",
            labels[0]
        ));
    }

    let trees: Vec<Tree> = (0..params.num_trees)
        .into_par_iter()
        .map(|t| {
            train_tree(
                &rows,
                &labels,
                2,
                min_samples_split,
                features_per_split,
                params.seed.wrapping_add(t as u64),
            )
        })
        .collect();

    Ok(RandomForestModel {
        version: 1,
        num_features,
        num_classes: 2,
        imputation: means,
        trees,
        num_trees: params.num_trees,
        min_samples_split,
        features_per_split,
        seed: params.seed,
        warnings,
    })
}

/// Average of per-tree leaf class distributions; sums to 1.
pub fn rf_predict_proba(model: &RandomForestModel, features: &PairFeatures) -> Vec<f64> {
    let row = impute_row(features, &model.imputation);
    let mut acc = vec![0.0f64; model.num_classes];
    for tree in &model.trees {
        let counts = tree.leaf_counts(&row);
        let total: u64 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        for (a, &c) in acc.iter_mut().zip(counts) {
            *a += c as f64 / total as f64;
        }
    }
    let sum: f64 = acc.iter().sum();
    if sum > 0.0 {
        for a in &mut acc {
            *a /= sum;
        }
    }
    acc
}

/// Keep the pairs whose relevance probability reaches `tau`; returns indices
/// in input order.
pub fn classify_pairs(model: &RandomForestModel, pairs: &[PairFeatures], tau: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, pf)| rf_predict_proba(model, pf)[RELEVANT_CLASS] >= tau)
        .map(|(i, _)| i)
        .collect()
}
