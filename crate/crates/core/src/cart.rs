//! Greedy CART baseline: axis-aligned binary splits chosen by Gini impurity,
//! grown without pruning. Serves as the classical reference point for the
//! differentiable trees, including a feature importance to compare rankings
//! against.

use crate::data::{Dataset, FeatureRange};
use crate::dot::DotBuilder;
use crate::error::{Error, Result};
use crate::util::argmax_first;
use serde::{Deserialize, Serialize};

/// Gini impurity of a class count vector: 1 - sum p^2. Empty counts read as
/// pure (0.0).
pub fn gini(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum::<f64>()
}

/// A candidate binary split: `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Gini decrease weighted by the node's local class proportions.
    pub decrease: f64,
}

/// Exhaustive best split over every feature and every midpoint between
/// consecutive distinct values. Ties resolve to the lower feature index, then
/// the lower threshold; returns `None` when nothing reduces impurity.
pub fn best_split(dataset: &Dataset, indices: &[usize]) -> Option<SplitCandidate> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let n_classes = dataset.n_classes();
    let mut parent_counts = vec![0usize; n_classes];
    for &i in indices {
        parent_counts[dataset.label(i)] += 1;
    }
    let parent_gini = gini(&parent_counts);
    if parent_gini == 0.0 {
        return None;
    }

    let mut best: Option<SplitCandidate> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for feature in 0..dataset.n_features() {
        pairs.clear();
        pairs.extend(indices.iter().map(|&i| (dataset.row(i)[feature], dataset.label(i))));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_counts = vec![0usize; n_classes];
        let mut right_counts = parent_counts.clone();
        for i in 0..n - 1 {
            let (x, label) = pairs[i];
            left_counts[label] += 1;
            right_counts[label] -= 1;
            let x_next = pairs[i + 1].0;
            if x >= x_next {
                continue;
            }
            let n_left = (i + 1) as f64;
            let n_right = (n - i - 1) as f64;
            let weighted = (n_left * gini(&left_counts) + n_right * gini(&right_counts))
                / n as f64;
            let decrease = parent_gini - weighted;
            if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: (x + x_next) / 2.0,
                    decrease,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum CartNode {
    Internal {
        feature: usize,
        threshold: f64,
        gini: f64,
        samples: usize,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
    Leaf {
        class_counts: Vec<usize>,
        predicted_class: usize,
        gini: f64,
        samples: usize,
    },
}

impl CartNode {
    pub fn samples(&self) -> usize {
        match self {
            CartNode::Internal { samples, .. } | CartNode::Leaf { samples, .. } => *samples,
        }
    }

    pub fn gini(&self) -> f64 {
        match self {
            CartNode::Internal { gini, .. } | CartNode::Leaf { gini, .. } => *gini,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 0,
            CartNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 1,
            CartNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// Predict by walking the tree; `<=` follows the left branch.
pub fn predict_cart(x: &[f64], node: &CartNode) -> usize {
    match node {
        CartNode::Leaf {
            predicted_class, ..
        } => *predicted_class,
        CartNode::Internal {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            if x[*feature] <= *threshold {
                predict_cart(x, left)
            } else {
                predict_cart(x, right)
            }
        }
    }
}

fn grow(
    dataset: &Dataset,
    indices: &[usize],
    depth: usize,
    max_depth: Option<usize>,
) -> CartNode {
    let mut counts = vec![0usize; dataset.n_classes()];
    for &i in indices {
        counts[dataset.label(i)] += 1;
    }
    let node_gini = gini(&counts);
    let make_leaf = |counts: Vec<usize>| CartNode::Leaf {
        predicted_class: argmax_first(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()),
        gini: node_gini,
        samples: indices.len(),
        class_counts: counts,
    };

    if node_gini == 0.0 || max_depth.is_some_and(|m| depth >= m) {
        return make_leaf(counts);
    }
    let Some(split) = best_split(dataset, indices) else {
        return make_leaf(counts);
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| dataset.row(i)[split.feature] <= split.threshold);
    CartNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        gini: node_gini,
        samples: indices.len(),
        left: Box::new(grow(dataset, &left_idx, depth + 1, max_depth)),
        right: Box::new(grow(dataset, &right_idx, depth + 1, max_depth)),
    }
}

/// A fitted CART classifier plus the metadata needed to render it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CartModel {
    pub root: CartNode,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Present when the training data was normalized; lets reports show
    /// thresholds in original units.
    pub feature_ranges: Option<Vec<FeatureRange>>,
}

/// Serialized CART payload; identical to the in-memory model.
pub type CartDoc = CartModel;

/// Grow a tree to purity (or `max_depth`). Deterministic: no sampling is
/// involved anywhere in the search.
pub fn fit_cart(dataset: &Dataset, max_depth: Option<usize>) -> Result<CartModel> {
    if dataset.n_instances() == 0 {
        return Err(Error::EmptyDataset("cannot fit a tree on no rows".into()));
    }
    let indices: Vec<usize> = (0..dataset.n_instances()).collect();
    Ok(CartModel {
        root: grow(dataset, &indices, 0, max_depth),
        feature_names: dataset.feature_names().to_vec(),
        class_names: dataset.class_names().to_vec(),
        feature_ranges: dataset.ranges().map(|r| r.to_vec()),
    })
}

impl CartModel {
    pub fn predict(&self, x: &[f64]) -> usize {
        predict_cart(x, &self.root)
    }

    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.n_instances() == 0 {
            return Err(Error::EmptyDataset("cannot score an empty dataset".into()));
        }
        let hits = (0..dataset.n_instances())
            .filter(|&i| self.predict(dataset.row(i)) == dataset.label(i))
            .count();
        Ok(hits as f64 / dataset.n_instances() as f64)
    }

    /// Gini importance: per feature, the sum over its split nodes of the
    /// sample-weighted impurity decrease, normalized to sum to one. All zeros
    /// when the tree never split.
    pub fn gini_importance(&self) -> Vec<f64> {
        let total = self.root.samples() as f64;
        let mut raw = vec![0.0; self.feature_names.len()];
        fn walk(node: &CartNode, total: f64, raw: &mut [f64]) {
            if let CartNode::Internal {
                feature,
                gini,
                samples,
                left,
                right,
                ..
            } = node
            {
                let n = *samples as f64;
                let weighted_children = (left.samples() as f64 * left.gini()
                    + right.samples() as f64 * right.gini())
                    / n;
                raw[*feature] += (n / total) * (gini - weighted_children);
                walk(left, total, raw);
                walk(right, total, raw);
            }
        }
        walk(&self.root, total, &mut raw);
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            for v in &mut raw {
                *v /= sum;
            }
        }
        raw
    }

    pub fn to_dot(&self) -> String {
        let mut builder = DotBuilder::new("cart");
        self.emit(&self.root, &mut builder);
        builder.finish()
    }

    fn display_threshold(&self, feature: usize, threshold: f64) -> f64 {
        match &self.feature_ranges {
            Some(ranges) => ranges[feature].denormalize(threshold),
            None => threshold,
        }
    }

    fn emit(&self, node: &CartNode, builder: &mut DotBuilder) -> usize {
        match node {
            CartNode::Leaf {
                predicted_class,
                class_counts,
                samples,
                ..
            } => {
                let label = format!(
                    "{}\n{} instances\ncounts = {:?}",
                    self.class_names[*predicted_class], samples, class_counts
                );
                builder.node(&label, true)
            }
            CartNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let t = self.display_threshold(*feature, *threshold);
                let id = builder.node(&self.feature_names[*feature], false);
                let left_id = self.emit(left, builder);
                builder.edge(id, left_id, &format!("<= {:.4}", t));
                let right_id = self.emit(right, builder);
                builder.edge(id, right_id, &format!("> {:.4}", t));
                id
            }
        }
    }
}
