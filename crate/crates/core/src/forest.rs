//! Random-subspace forest: when the feature count makes a single full tree
//! intractable (leaves grow exponentially with features), train many trees on
//! small feature subsets and combine them by majority vote.

use crate::data::{Dataset, FeatureRange};
use crate::error::{Error, Result};
use crate::model::{DndtModel, TreeDoc};
use crate::train::{derive_seed, fit_with_validation, TrainConfig};
use crate::util::argmax_first;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Feature count above which the CLI switches from one tree to a forest.
pub const FOREST_FEATURE_THRESHOLD: usize = 12;
pub const DEFAULT_TREES: usize = 10;
pub const DEFAULT_SUBSET_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub subset_size: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: DEFAULT_TREES,
            subset_size: DEFAULT_SUBSET_SIZE,
        }
    }
}

/// Whether a single tree over `n_features` should give way to a forest.
pub fn should_use_forest(n_features: usize) -> bool {
    n_features > FOREST_FEATURE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestTree {
    /// Indices into the full feature space, sorted ascending.
    pub features: Vec<usize>,
    pub model: DndtModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<ForestTree>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    n_features: usize,
    subset_size: usize,
    /// Training-time normalization ranges over the full feature space.
    feature_ranges: Vec<FeatureRange>,
}

/// Train `config.n_trees` trees, each on its own without-replacement feature
/// subset. Subsets come from one master rng seeded by the training seed; each
/// tree trains under a derived seed, so the whole forest is reproducible and
/// trees can train in parallel.
pub fn fit_forest(
    dataset: &Dataset,
    train_config: &TrainConfig,
    forest_config: &ForestConfig,
) -> Result<ForestModel> {
    if forest_config.n_trees == 0 {
        return Err(Error::InvalidConfig("a forest needs at least one tree".into()));
    }
    if forest_config.subset_size == 0 || forest_config.subset_size > dataset.n_features() {
        return Err(Error::InvalidConfig(format!(
            "subset size {} invalid for {} features",
            forest_config.subset_size,
            dataset.n_features()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let subsets: Vec<Vec<usize>> = (0..forest_config.n_trees)
        .map(|_| {
            let mut subset = rand::seq::index::sample(
                &mut rng,
                dataset.n_features(),
                forest_config.subset_size,
            )
            .into_vec();
            subset.sort_unstable();
            subset
        })
        .collect();

    let trees: Vec<ForestTree> = subsets
        .into_par_iter()
        .enumerate()
        .map(|(i, features)| {
            let sub = dataset.select_features(&features)?;
            let mut tree_config = train_config.clone();
            tree_config.seed = derive_seed(train_config.seed, i as u64);
            let outcome = fit_with_validation(&sub, None, &tree_config)?;
            Ok(ForestTree {
                features,
                model: outcome.model,
            })
        })
        .collect::<Result<_>>()?;

    let feature_ranges = dataset
        .ranges()
        .ok_or_else(|| Error::InvalidOperation {
            op: "fit_forest",
            message: "dataset must be normalized before training".into(),
        })?
        .to_vec();
    Ok(ForestModel {
        trees,
        feature_names: dataset.feature_names().to_vec(),
        class_names: dataset.class_names().to_vec(),
        n_features: dataset.n_features(),
        subset_size: forest_config.subset_size,
        feature_ranges,
    })
}

impl ForestModel {
    pub fn trees(&self) -> &[ForestTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_ranges(&self) -> &[FeatureRange] {
        &self.feature_ranges
    }

    /// Majority vote over per-tree hard predictions; vote ties resolve to the
    /// lowest class index.
    pub fn predict_majority(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch {
                op: "predict_majority",
                lhs: vec![x.len()],
                rhs: vec![self.n_features],
            });
        }
        let mut votes = vec![0.0; self.class_names.len()];
        let mut projected = Vec::with_capacity(self.subset_size);
        for tree in &self.trees {
            projected.clear();
            projected.extend(tree.features.iter().map(|&d| x[d]));
            votes[tree.model.predict_class(&projected)?] += 1.0;
        }
        Ok(argmax_first(&votes))
    }

    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.n_instances() == 0 {
            return Err(Error::EmptyDataset("cannot score an empty dataset".into()));
        }
        let mut hits = 0usize;
        for i in 0..dataset.n_instances() {
            if self.predict_majority(dataset.row(i))? == dataset.label(i) {
                hits += 1;
            }
        }
        Ok(hits as f64 / dataset.n_instances() as f64)
    }

    pub fn to_doc(&self) -> ForestDoc {
        ForestDoc {
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            n_features: self.n_features,
            subset_size: self.subset_size,
            feature_ranges: self.feature_ranges.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| ForestTreeDoc {
                    features: t.features.clone(),
                    tree: t.model.to_doc(),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &ForestDoc) -> Result<Self> {
        if doc.trees.is_empty() {
            return Err(Error::ModelFormat("forest document has no trees".into()));
        }
        let trees = doc
            .trees
            .iter()
            .map(|t| {
                for &d in &t.features {
                    if d >= doc.n_features {
                        return Err(Error::ModelFormat(format!(
                            "tree references feature {} of {}",
                            d, doc.n_features
                        )));
                    }
                }
                Ok(ForestTree {
                    features: t.features.clone(),
                    model: DndtModel::from_doc(&t.tree)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if doc.feature_ranges.len() != doc.n_features {
            return Err(Error::ModelFormat(format!(
                "forest document carries {} ranges for {} features",
                doc.feature_ranges.len(),
                doc.n_features
            )));
        }
        Ok(ForestModel {
            trees,
            feature_names: doc.feature_names.clone(),
            class_names: doc.class_names.clone(),
            n_features: doc.n_features,
            subset_size: doc.subset_size,
            feature_ranges: doc.feature_ranges.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestTreeDoc {
    pub features: Vec<usize>,
    pub tree: TreeDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestDoc {
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub n_features: usize,
    pub subset_size: usize,
    pub feature_ranges: Vec<FeatureRange>,
    pub trees: Vec<ForestTreeDoc>,
}
