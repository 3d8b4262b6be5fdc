//! The differentiable tree model: per-feature soft binners whose bin
//! activations are merged by an outer (Kronecker) product into one activation
//! per leaf, followed by a trainable leaf-to-class score matrix.
//!
//! With bins (n_1+1, ..., n_D+1) the leaf space enumerates every cut point
//! combination row-major, feature 0 varying slowest: leaf index of hard bins
//! (b_1..b_D) is sum(b_d * stride_d) with stride_d the product of later bin
//! counts. The model is therefore a full tree of depth D with one feature
//! tested per level.

use crate::binning::{hard_bin, soft_bin, st_gumbel_bin, SoftBinner};
use crate::data::{Dataset, FeatureRange};
use crate::dot::DotBuilder;
use crate::error::{Error, Result};
use crate::util::{argmax_first, softmax_vec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hard ceiling on leaves a single tree may have; beyond this the caller
/// should train a random-subspace forest instead.
pub const MAX_LEAVES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMode {
    /// Softmax bin memberships; the leaf activation is a distribution.
    Soft,
    /// Deterministic binning; the leaf activation is exactly one-hot.
    Hard,
    /// One-hot sampled through Gumbel perturbation; needs an rng.
    StGumbel,
}

/// Per-leaf activation for one instance, ordered row-major over features.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRouting {
    pub z: Vec<f64>,
}

impl LeafRouting {
    /// Leaf with the largest activation; ties go to the higher index to match
    /// the upper-bin convention of boundary values.
    pub fn argmax(&self) -> usize {
        crate::util::argmax_last(&self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DndtModel {
    binners: Vec<SoftBinner>,
    /// Row-major [leaf_count, n_classes] score matrix.
    leaf_scores: Vec<f64>,
    n_classes: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    /// Original-unit range of each feature, for reporting thresholds.
    feature_ranges: Vec<FeatureRange>,
}

fn checked_leaf_count(binners: &[SoftBinner]) -> Result<usize> {
    let mut leaves: u128 = 1;
    for b in binners {
        leaves = leaves.saturating_mul(b.n_bins() as u128);
        if leaves > MAX_LEAVES as u128 {
            return Err(Error::TooManyLeaves {
                leaves,
                limit: MAX_LEAVES,
            });
        }
    }
    Ok(leaves as usize)
}

impl DndtModel {
    pub fn new(
        binners: Vec<SoftBinner>,
        leaf_scores: Vec<f64>,
        n_classes: usize,
        feature_names: Vec<String>,
        class_names: Vec<String>,
        feature_ranges: Vec<FeatureRange>,
    ) -> Result<Self> {
        if binners.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one feature".into()));
        }
        if n_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "model needs at least 2 classes, got {}",
                n_classes
            )));
        }
        if feature_names.len() != binners.len() || feature_ranges.len() != binners.len() {
            return Err(Error::InvalidConfig(format!(
                "{} binners but {} feature names and {} ranges",
                binners.len(),
                feature_names.len(),
                feature_ranges.len()
            )));
        }
        if class_names.len() != n_classes {
            return Err(Error::InvalidConfig(format!(
                "{} class names for {} classes",
                class_names.len(),
                n_classes
            )));
        }
        let leaves = checked_leaf_count(&binners)?;
        if leaf_scores.len() != leaves * n_classes {
            return Err(Error::InvalidConfig(format!(
                "leaf score matrix has {} values, expected {} leaves x {} classes",
                leaf_scores.len(),
                leaves,
                n_classes
            )));
        }
        Ok(DndtModel {
            binners,
            leaf_scores,
            n_classes,
            feature_names,
            class_names,
            feature_ranges,
        })
    }

    /// Fresh model with leaf scores drawn uniformly from [-0.1, 0.1).
    pub fn with_random_scores<R: Rng + ?Sized>(
        binners: Vec<SoftBinner>,
        n_classes: usize,
        feature_names: Vec<String>,
        class_names: Vec<String>,
        feature_ranges: Vec<FeatureRange>,
        rng: &mut R,
    ) -> Result<Self> {
        let leaves = checked_leaf_count(&binners)?;
        let scores: Vec<f64> = (0..leaves * n_classes)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect();
        DndtModel::new(
            binners,
            scores,
            n_classes,
            feature_names,
            class_names,
            feature_ranges,
        )
    }

    pub fn n_features(&self) -> usize {
        self.binners.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn binners(&self) -> &[SoftBinner] {
        &self.binners
    }

    pub fn binners_mut(&mut self) -> &mut [SoftBinner] {
        &mut self.binners
    }

    pub fn leaf_scores(&self) -> &[f64] {
        &self.leaf_scores
    }

    pub fn leaf_scores_mut(&mut self) -> &mut [f64] {
        &mut self.leaf_scores
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

    pub fn leaf_count(&self) -> usize {
        self.binners.iter().map(SoftBinner::n_bins).product()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::ShapeMismatch {
                op: "route",
                lhs: vec![x.len()],
                rhs: vec![self.n_features()],
            });
        }
        Ok(())
    }

    /// Leaf activation of one normalized instance. `Soft` folds per-feature
    /// bin distributions with an outer product (feature 0 slowest); `Hard`
    /// places all mass on one leaf; `StGumbel` samples a one-hot leaf and
    /// requires `rng`.
    pub fn route<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        mode: RouteMode,
        mut rng: Option<&mut R>,
    ) -> Result<LeafRouting> {
        self.check_input(x)?;
        match mode {
            RouteMode::Hard => {
                let mut z = vec![0.0; self.leaf_count()];
                z[self.hard_leaf_index(x)?] = 1.0;
                Ok(LeafRouting { z })
            }
            RouteMode::Soft | RouteMode::StGumbel => {
                let mut z = vec![1.0];
                for (d, binner) in self.binners.iter().enumerate() {
                    let act = match mode {
                        RouteMode::Soft => soft_bin(x[d], binner)?,
                        RouteMode::StGumbel => {
                            let rng = rng.as_deref_mut().ok_or(Error::InvalidOperation {
                                op: "route",
                                message: "st_gumbel routing needs an rng".into(),
                            })?;
                            st_gumbel_bin(x[d], binner, rng)?
                        }
                        RouteMode::Hard => unreachable!(),
                    };
                    let mut next = vec![0.0; z.len() * act.probabilities.len()];
                    for (j, &zj) in z.iter().enumerate() {
                        for (k, &pk) in act.probabilities.iter().enumerate() {
                            next[j * act.probabilities.len() + k] = zj * pk;
                        }
                    }
                    z = next;
                }
                Ok(LeafRouting { z })
            }
        }
    }

    pub fn route_soft(&self, x: &[f64]) -> Result<LeafRouting> {
        self.route::<rand_chacha::ChaCha8Rng>(x, RouteMode::Soft, None)
    }

    pub fn route_hard(&self, x: &[f64]) -> Result<LeafRouting> {
        self.route::<rand_chacha::ChaCha8Rng>(x, RouteMode::Hard, None)
    }

    /// Index of the deterministic leaf for one instance.
    pub fn hard_leaf_index(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        let mut index = 0usize;
        for (d, binner) in self.binners.iter().enumerate() {
            index = index * binner.n_bins() + hard_bin(x[d], &binner.sorted_cutpoints());
        }
        Ok(index)
    }

    /// Class logits: the routed leaf activation times the score matrix.
    pub fn predict_logits<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        mode: RouteMode,
        rng: Option<&mut R>,
    ) -> Result<Vec<f64>> {
        let routing = self.route(x, mode, rng)?;
        let mut logits = vec![0.0; self.n_classes];
        for (leaf, &zl) in routing.z.iter().enumerate() {
            if zl == 0.0 {
                continue;
            }
            let row = &self.leaf_scores[leaf * self.n_classes..(leaf + 1) * self.n_classes];
            for (o, &s) in logits.iter_mut().zip(row) {
                *o += zl * s;
            }
        }
        Ok(logits)
    }

    /// Deterministic prediction: hard routing, score argmax, class ties
    /// resolved to the lowest index.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let logits =
            self.predict_logits::<rand_chacha::ChaCha8Rng>(x, RouteMode::Hard, None)?;
        Ok(argmax_first(&logits))
    }

    /// Hard-routing accuracy over a normalized dataset.
    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.n_instances() == 0 {
            return Err(Error::EmptyDataset("cannot score an empty dataset".into()));
        }
        let mut hits = 0usize;
        for i in 0..dataset.n_instances() {
            if self.predict_class(dataset.row(i))? == dataset.label(i) {
                hits += 1;
            }
        }
        Ok(hits as f64 / dataset.n_instances() as f64)
    }

    /// Readable tree form: one level per feature, thresholds in original
    /// units, leaves carrying score distributions and hard-routed instance
    /// tallies from `dataset`.
    pub fn to_tree_view(&self, dataset: &Dataset) -> Result<TreeView> {
        if dataset.n_features() != self.n_features() {
            return Err(Error::ShapeMismatch {
                op: "tree_view",
                lhs: vec![dataset.n_features()],
                rhs: vec![self.n_features()],
            });
        }
        if !dataset.is_normalized() {
            return Err(Error::Data(
                "tree view tallies need a normalized dataset".into(),
            ));
        }
        let leaves = self.leaf_count();
        let mut instance_counts = vec![0usize; leaves];
        let mut class_counts = vec![vec![0usize; self.n_classes]; leaves];
        for i in 0..dataset.n_instances() {
            let leaf = self.hard_leaf_index(dataset.row(i))?;
            instance_counts[leaf] += 1;
            class_counts[leaf][dataset.label(i)] += 1;
        }
        let mut next_leaf = 0usize;
        let root = self.build_view_node(0, &instance_counts, &class_counts, &mut next_leaf);
        Ok(TreeView {
            root,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        })
    }

    fn build_view_node(
        &self,
        depth: usize,
        instance_counts: &[usize],
        class_counts: &[Vec<usize>],
        next_leaf: &mut usize,
    ) -> TreeViewNode {
        if depth == self.n_features() {
            let leaf = *next_leaf;
            *next_leaf += 1;
            let row = &self.leaf_scores[leaf * self.n_classes..(leaf + 1) * self.n_classes];
            return TreeViewNode::Leaf {
                leaf_index: leaf,
                predicted_class: argmax_first(row),
                class_distribution: softmax_vec(row),
                instance_count: instance_counts[leaf],
                class_counts: class_counts[leaf].clone(),
            };
        }
        let binner = &self.binners[depth];
        let normalized = binner.sorted_cutpoints();
        let range = self.feature_ranges[depth];
        let thresholds: Vec<f64> = normalized.iter().map(|&c| range.denormalize(c)).collect();
        let children: Vec<TreeViewNode> = (0..binner.n_bins())
            .map(|_| self.build_view_node(depth + 1, instance_counts, class_counts, next_leaf))
            .collect();
        TreeViewNode::Internal {
            feature: depth,
            thresholds,
            thresholds_normalized: normalized,
            children,
        }
    }

    pub fn to_doc(&self) -> TreeDoc {
        TreeDoc {
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            temperature: self.binners[0].temperature(),
            cutpoints: self.binners.iter().map(|b| b.cutpoints().to_vec()).collect(),
            cutpoints_original_units: self
                .binners
                .iter()
                .zip(&self.feature_ranges)
                .map(|(b, r)| {
                    b.sorted_cutpoints()
                        .iter()
                        .map(|&c| r.denormalize(c))
                        .collect()
                })
                .collect(),
            feature_ranges: self.feature_ranges.clone(),
            leaf_scores: self.leaf_scores.clone(),
        }
    }

    pub fn from_doc(doc: &TreeDoc) -> Result<Self> {
        let binners = doc
            .cutpoints
            .iter()
            .map(|c| SoftBinner::new(c.clone(), doc.temperature))
            .collect::<Result<Vec<_>>>()?;
        DndtModel::new(
            binners,
            doc.leaf_scores.clone(),
            doc.class_names.len(),
            doc.feature_names.clone(),
            doc.class_names.clone(),
            doc.feature_ranges.clone(),
        )
    }
}

/// Human-oriented rendering of a trained model as a literal tree: level d
/// tests feature d against its sorted thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeView {
    pub root: TreeViewNode,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeViewNode {
    Internal {
        feature: usize,
        /// Sorted thresholds in original units.
        thresholds: Vec<f64>,
        thresholds_normalized: Vec<f64>,
        /// One child per bin, lowest interval first.
        children: Vec<TreeViewNode>,
    },
    Leaf {
        leaf_index: usize,
        predicted_class: usize,
        /// Softmax of the leaf's score row.
        class_distribution: Vec<f64>,
        instance_count: usize,
        class_counts: Vec<usize>,
    },
}

impl TreeView {
    pub fn leaf_count(&self) -> usize {
        fn count(node: &TreeViewNode) -> usize {
            match node {
                TreeViewNode::Leaf { .. } => 1,
                TreeViewNode::Internal { children, .. } => children.iter().map(count).sum(),
            }
        }
        count(&self.root)
    }

    /// Follow the hard routing of a normalized instance down the view.
    pub fn leaf_index_for(&self, x: &[f64]) -> Result<usize> {
        let mut node = &self.root;
        loop {
            match node {
                TreeViewNode::Leaf { leaf_index, .. } => return Ok(*leaf_index),
                TreeViewNode::Internal {
                    feature,
                    thresholds_normalized,
                    children,
                    ..
                } => {
                    if *feature >= x.len() {
                        return Err(Error::ShapeMismatch {
                            op: "tree_view_route",
                            lhs: vec![x.len()],
                            rhs: vec![*feature + 1],
                        });
                    }
                    let bin = hard_bin(x[*feature], thresholds_normalized);
                    node = &children[bin];
                }
            }
        }
    }

    pub fn to_dot(&self) -> String {
        let mut builder = DotBuilder::new("dndt");
        self.emit(&self.root, &mut builder);
        builder.finish()
    }

    fn emit(&self, node: &TreeViewNode, builder: &mut DotBuilder) -> usize {
        match node {
            TreeViewNode::Leaf {
                predicted_class,
                instance_count,
                class_distribution,
                ..
            } => {
                let label = format!(
                    "{}\n{} instances\np = {}",
                    self.class_names[*predicted_class],
                    instance_count,
                    class_distribution
                        .iter()
                        .map(|p| format!("{:.2}", p))
                        .collect::<Vec<_>>()
                        .join("/")
                );
                builder.node(&label, true)
            }
            TreeViewNode::Internal {
                feature,
                thresholds,
                children,
                ..
            } => {
                let id = builder.node(&self.feature_names[*feature], false);
                for (bin, child) in children.iter().enumerate() {
                    let child_id = self.emit(child, builder);
                    let label = interval_label(thresholds, bin);
                    builder.edge(id, child_id, &label);
                }
                id
            }
        }
    }
}

/// Edge label for bin `bin` of sorted `thresholds`: "< t1", "[t1, t2)", ">= tn".
fn interval_label(thresholds: &[f64], bin: usize) -> String {
    if bin == 0 {
        format!("< {:.4}", thresholds[0])
    } else if bin == thresholds.len() {
        format!(">= {:.4}", thresholds[bin - 1])
    } else {
        format!("[{:.4}, {:.4})", thresholds[bin - 1], thresholds[bin])
    }
}

/// Serialized form of one differentiable tree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TreeDoc {
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub temperature: f64,
    /// Raw trained cut points per feature, normalized units, unsorted.
    pub cutpoints: Vec<Vec<f64>>,
    /// Sorted cut points mapped back to original units, for reading.
    pub cutpoints_original_units: Vec<Vec<f64>>,
    pub feature_ranges: Vec<FeatureRange>,
    /// Row-major [leaf_count, n_classes].
    pub leaf_scores: Vec<f64>,
}

/// Versioned on-disk model envelope shared by all three model kinds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub payload: ModelPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Tree(TreeDoc),
    Forest(crate::forest::ForestDoc),
    Cart(crate::cart::CartDoc),
}

pub const MODEL_FORMAT: &str = "dndt-model";
pub const MODEL_VERSION: u32 = 1;

impl ModelFile {
    pub fn new(payload: ModelPayload) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            payload,
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("not a model file: {}", e)))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "format '{}' is not '{}'",
                file.format, MODEL_FORMAT
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "version {} unsupported (expected {})",
                file.version, MODEL_VERSION
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_range() -> FeatureRange {
        FeatureRange { min: 0.0, max: 1.0 }
    }

    fn one_feature_model() -> DndtModel {
        DndtModel::new(
            vec![SoftBinner::new(vec![0.33, 0.66], 1.0).unwrap()],
            vec![
                1.0, 0.0, 0.0, // leaf 0 -> class 0
                0.0, 1.0, 0.0, // leaf 1 -> class 1
                0.0, 0.0, 1.0, // leaf 2 -> class 2
            ],
            3,
            vec!["x".into()],
            vec!["a".into(), "b".into(), "c".into()],
            vec![unit_range()],
        )
        .unwrap()
    }

    #[test]
    fn single_feature_soft_routing_matches_binning_anchor() {
        let model = one_feature_model();
        let routing = model.route_soft(&[0.5]).unwrap();
        assert!((routing.z[0] - 0.3130).abs() < 5e-4);
        assert!((routing.z[1] - 0.3709).abs() < 5e-4);
        assert!((routing.z[2] - 0.3161).abs() < 5e-4);
        assert_eq!(routing.argmax(), 1);
        let hard = model.route_hard(&[0.5]).unwrap();
        assert_eq!(hard.z, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_feature_routing_is_row_major_with_feature_zero_slowest() {
        let model = DndtModel::new(
            vec![
                SoftBinner::new(vec![0.4, 0.7], 0.5).unwrap(),
                SoftBinner::new(vec![0.5], 0.5).unwrap(),
            ],
            vec![0.0; 6 * 2],
            2,
            vec!["f0".into(), "f1".into()],
            vec!["a".into(), "b".into()],
            vec![unit_range(), unit_range()],
        )
        .unwrap();
        let x = [0.55, 0.2];
        let z = model.route_soft(&x).unwrap().z;
        let p0 = soft_bin(x[0], &model.binners()[0]).unwrap().probabilities;
        let p1 = soft_bin(x[1], &model.binners()[1]).unwrap().probabilities;
        assert_eq!(z.len(), 6);
        for j in 0..3 {
            for k in 0..2 {
                assert_relative_eq!(z[j * 2 + k], p0[j] * p1[k], max_relative = 1e-12);
            }
        }
        let sum: f64 = z.iter().sum();
        assert_relative_eq!(sum, 1.0, max_relative = 1e-12);

        // Hard index: bin(0.55 | 0.4, 0.7) = 1, bin(0.2 | 0.5) = 0 -> 1*2+0.
        assert_eq!(model.hard_leaf_index(&x).unwrap(), 2);
        assert_eq!(model.route_hard(&x).unwrap().z[2], 1.0);
    }

    #[test]
    fn logits_are_leaf_activation_times_scores() {
        let model = DndtModel::new(
            vec![SoftBinner::new(vec![0.5], 1.0).unwrap()],
            vec![2.0, -1.0, 0.5, 3.0],
            2,
            vec!["x".into()],
            vec!["a".into(), "b".into()],
            vec![unit_range()],
        )
        .unwrap();
        let z = model.route_soft(&[0.3]).unwrap().z;
        let logits = model
            .predict_logits::<rand_chacha::ChaCha8Rng>(&[0.3], RouteMode::Soft, None)
            .unwrap();
        assert_relative_eq!(logits[0], z[0] * 2.0 + z[1] * 0.5, max_relative = 1e-12);
        assert_relative_eq!(logits[1], -z[0] + z[1] * 3.0, max_relative = 1e-12);
        // Hard: 0.3 < 0.5 -> leaf 0 -> scores (2, -1) -> class 0.
        assert_eq!(model.predict_class(&[0.3]).unwrap(), 0);
        assert_eq!(model.predict_class(&[0.9]).unwrap(), 1);
    }

    #[test]
    fn st_gumbel_routing_needs_an_rng_and_samples_one_hot() {
        let model = one_feature_model();
        assert!(model
            .route::<rand_chacha::ChaCha8Rng>(&[0.5], RouteMode::StGumbel, None)
            .is_err());
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let z = model
            .route(&[0.5], RouteMode::StGumbel, Some(&mut rng))
            .unwrap()
            .z;
        assert_eq!(z.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(z.iter().filter(|&&v| v == 0.0).count(), 2);
    }

    #[test]
    fn oversized_trees_are_rejected_with_forest_pointer() {
        let binners: Vec<SoftBinner> = (0..21)
            .map(|_| SoftBinner::new(vec![0.5], 0.1).unwrap())
            .collect();
        let names: Vec<String> = (0..21).map(|d| format!("f{}", d)).collect();
        let err = DndtModel::new(
            binners,
            vec![],
            2,
            names,
            vec!["a".into(), "b".into()],
            vec![unit_range(); 21],
        )
        .unwrap_err();
        match err {
            Error::TooManyLeaves { leaves, limit } => {
                assert_eq!(leaves, 1 << 21);
                assert_eq!(limit, MAX_LEAVES);
                assert!(err.to_string().contains("forest"));
            }
            other => panic!("expected TooManyLeaves, got {:?}", other),
        }
    }

    #[test]
    fn tree_view_counts_and_thresholds_round_trip() {
        let model = DndtModel::new(
            vec![
                SoftBinner::new(vec![0.5], 0.1).unwrap(),
                SoftBinner::new(vec![0.25, 0.75], 0.1).unwrap(),
            ],
            (0..12).map(|i| i as f64 * 0.1).collect(),
            2,
            vec!["f0".into(), "f1".into()],
            vec!["a".into(), "b".into()],
            vec![
                FeatureRange { min: 1.0, max: 6.9 },
                FeatureRange { min: 0.0, max: 10.0 },
            ],
        )
        .unwrap();
        let ds = Dataset::from_parts(
            vec![0.1, 0.1, 0.9, 0.9, 0.6, 0.5, 0.2, 0.8],
            vec![0, 1, 0, 1],
            vec!["f0".into(), "f1".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .mark_unit_normalized();
        let view = model.to_tree_view(&ds).unwrap();
        assert_eq!(view.leaf_count(), 6);

        let total: usize = {
            fn sum_counts(node: &TreeViewNode) -> usize {
                match node {
                    TreeViewNode::Leaf { instance_count, .. } => *instance_count,
                    TreeViewNode::Internal { children, .. } => {
                        children.iter().map(sum_counts).sum()
                    }
                }
            }
            sum_counts(&view.root)
        };
        assert_eq!(total, ds.n_instances());

        for i in 0..ds.n_instances() {
            assert_eq!(
                view.leaf_index_for(ds.row(i)).unwrap(),
                model.hard_leaf_index(ds.row(i)).unwrap()
            );
        }

        // Feature 0 threshold 0.5 over range [1, 6.9] reads as 3.95.
        match &view.root {
            TreeViewNode::Internal { thresholds, .. } => {
                assert_relative_eq!(thresholds[0], 3.95, max_relative = 1e-12);
            }
            _ => panic!("root must be internal"),
        }

        let dot = view.to_dot();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("n0 ->").count(), 2);
        assert!(dot.contains("3.9500"));
    }

    #[test]
    fn model_document_round_trips_through_json() {
        let model = one_feature_model();
        let file = ModelFile::new(ModelPayload::Tree(model.to_doc()));
        let json = file.to_json_pretty().unwrap();
        assert!(json.contains("\"kind\": \"tree\""));
        let parsed = ModelFile::from_json(&json).unwrap();
        match parsed.payload {
            ModelPayload::Tree(doc) => {
                let restored = DndtModel::from_doc(&doc).unwrap();
                assert_eq!(restored, model);
            }
            _ => panic!("round trip changed the payload kind"),
        }

        let bad = json.replace("dndt-model", "other-format");
        assert!(matches!(
            ModelFile::from_json(&bad),
            Err(Error::ModelFormat(_))
        ));
    }
}
