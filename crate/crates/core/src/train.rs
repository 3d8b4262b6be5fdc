//! Gradient training of the differentiable tree.
//!
//! Every batch rebuilds a small graph: per-feature cut points are sorted,
//! turned into bin biases, evaluated against the fixed weights, softmaxed at
//! the epoch's temperature, merged across features by outer products, and
//! pushed through the leaf score matrix into a mean cross-entropy loss. Cut
//! points and leaf scores both receive gradients and step together.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::binning::{
    quantile_cutpoints, soft_bin_graph, st_gumbel_bin_graph, SoftBinner, TemperatureSchedule,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::DndtModel;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Batch loss above this aborts training as diverged.
const LOSS_DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn momentum() -> Self {
        Optimizer::Momentum { momentum: 0.9 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Optimizer::Sgd => Ok(()),
            Optimizer::Momentum { momentum } => {
                if (0.0..1.0).contains(&momentum) {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "momentum must be in [0, 1), got {}",
                        momentum
                    )))
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "adam needs beta1, beta2 in [0, 1) and positive epsilon, got ({}, {}, {})",
                        beta1, beta2, epsilon
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub cutpoints_per_feature: usize,
    pub temperature: TemperatureSchedule,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// Sample one-hot bins through Gumbel noise instead of soft memberships.
    pub st_gumbel: bool,
    /// L2 penalty applied to leaf scores only; cut points are positions, not
    /// weights, and decaying them toward zero would bias every threshold.
    pub weight_decay: f64,
    pub seed: u64,
    /// Fraction held out by [`fit`] for per-epoch validation accuracy.
    /// Zero trains on every instance with no held-out slice.
    pub validation_split: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            cutpoints_per_feature: 1,
            temperature: TemperatureSchedule::constant(0.1),
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 200,
            optimizer: Optimizer::Sgd,
            st_gumbel: false,
            weight_decay: 0.0,
            seed: 0,
            validation_split: 0.2,
        }
    }
}

impl TrainConfig {
    /// Protocol for multi-run feature studies (ignore rates, importance
    /// rankings): Adam over a long horizon with a medium batch. Short
    /// small-batch SGD, the plain training default, leaves marginal cut
    /// points drifting inside the data range instead of pushing them past
    /// it, which blurs the ignored-feature signal; whole-dataset batches
    /// remove the gradient noise that helps evict unused cut points.
    pub fn feature_study(n_instances: usize) -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(),
            batch_size: n_instances.clamp(1, 100),
            epochs: 1000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutpoints_per_feature == 0 {
            return Err(Error::InvalidConfig(
                "at least one cut point per feature required".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epoch count must be positive".into()));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(self.validation_split >= 0.0 && self.validation_split < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation split must be in [0, 1), got {}",
                self.validation_split
            )));
        }
        self.temperature.validate()?;
        self.optimizer.validate()
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,loss,train_accuracy,validation_accuracy,temperature\n");
        for r in &self.epochs {
            let val = r
                .validation_accuracy
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.loss, r.train_accuracy, val, r.temperature
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DndtModel,
    pub report: TrainReport,
}

/// Deterministic derived seed for sub-tasks (per-run, per-tree), so that
/// parallel work stays reproducible under one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_B08F);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Convenience wrapper: hold out a stratified validation slice, train on the
/// rest. The split is seeded by the config, so identical configs see
/// identical splits.
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.validation_split == 0.0 {
        return fit_with_validation(dataset, None, config);
    }
    let (train, val) = dataset.stratified_split(1.0 - config.validation_split, config.seed)?;
    fit_with_validation(&train, Some(&val), config)
}

/// Train on `train`, optionally tracking accuracy on `validation` each epoch.
/// The validation set never influences updates.
pub fn fit_with_validation(
    train: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if !train.is_normalized() {
        return Err(Error::Data(
            "training data must be normalized to [0, 1] first".into(),
        ));
    }
    if let Some(val) = validation {
        if val.n_features() != train.n_features() {
            return Err(Error::ShapeMismatch {
                op: "fit",
                lhs: vec![val.n_features()],
                rhs: vec![train.n_features()],
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let binners: Vec<SoftBinner> = (0..train.n_features())
        .map(|d| {
            let cuts = quantile_cutpoints(&train.feature_column(d), config.cutpoints_per_feature)?;
            SoftBinner::new(cuts, config.temperature.temperature_at(0))
        })
        .collect::<Result<_>>()?;
    let ranges = train
        .ranges()
        .expect("normalization checked above")
        .to_vec();
    let mut model = DndtModel::with_random_scores(
        binners,
        train.n_classes(),
        train.feature_names().to_vec(),
        train.class_names().to_vec(),
        ranges,
        &mut rng,
    )?;

    let n_features = train.n_features();
    let leaves = model.leaf_count();
    let n_classes = model.n_classes();
    let mut opt = OptimizerState::new(&model);
    let mut report = TrainReport::default();
    let mut indices: Vec<usize> = (0..train.n_instances()).collect();

    for epoch in 0..config.epochs {
        let tau = config.temperature.temperature_at(epoch);
        for binner in model.binners_mut() {
            binner.set_temperature(tau)?;
        }
        indices.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| train.label(i)).collect();
            let mut g = Graph::new();
            let beta_ids: Vec<NodeId> = (0..n_features)
                .map(|d| {
                    g.param(Tensor::vector(
                        model.binners()[d].cutpoints().to_vec(),
                    ))
                })
                .collect();
            let score_id = g.param(Tensor::matrix(
                leaves,
                n_classes,
                model.leaf_scores().to_vec(),
            )?);
            let loss_id = forward_loss(
                &mut g,
                &beta_ids,
                score_id,
                train,
                batch,
                &labels,
                tau,
                config.st_gumbel,
                &mut rng,
            )?;
            let loss = g.value(loss_id).item()?;
            // Inputs sit in [0, 1] and scores start near zero, so a healthy
            // run keeps cross entropy within a few nats. A batch loss this
            // large means the parameters are unrecoverably far gone even
            // though the log-sum-exp arithmetic itself stays finite.
            if !loss.is_finite() || loss > LOSS_DIVERGENCE_LIMIT {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("batch loss became {:e}", loss),
                });
            }
            loss_sum += loss * batch.len() as f64;
            g.backward(loss_id)?;

            for (d, &beta_id) in beta_ids.iter().enumerate() {
                let grad = g.grad(beta_id).expect("backward fills every node");
                let mut cuts = model.binners()[d].cutpoints().to_vec();
                opt.step_cutpoints(d, &mut cuts, grad.data(), config);
                model.binners_mut()[d].set_cutpoints(cuts)?;
            }
            let score_grad = g.grad(score_id).expect("backward fills every node");
            let grad_data = score_grad.data().to_vec();
            opt.step_scores(model.leaf_scores_mut(), &grad_data, config);

            let finite = model
                .binners()
                .iter()
                .all(|b| b.cutpoints().iter().all(|v| v.is_finite()))
                && model.leaf_scores().iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Diverged {
                    epoch,
                    reason: "parameters became non-finite after an update".into(),
                });
            }
        }

        report.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / train.n_instances() as f64,
            train_accuracy: model.accuracy(train)?,
            validation_accuracy: validation.map(|v| model.accuracy(v)).transpose()?,
            temperature: tau,
        });
    }

    Ok(TrainOutcome { model, report })
}

/// Shared forward construction: per-feature binning, outer-product routing,
/// score matmul, mean cross-entropy. Returns the scalar loss node.
#[allow(clippy::too_many_arguments)]
fn forward_loss<R: Rng + ?Sized>(
    g: &mut Graph,
    beta_ids: &[NodeId],
    score_id: NodeId,
    data: &Dataset,
    batch: &[usize],
    labels: &[usize],
    tau: f64,
    st_gumbel: bool,
    rng: &mut R,
) -> Result<NodeId> {
    let mut z: Option<NodeId> = None;
    for (d, &beta_id) in beta_ids.iter().enumerate() {
        let xs: Vec<f64> = batch.iter().map(|&i| data.row(i)[d]).collect();
        let pi = if st_gumbel {
            st_gumbel_bin_graph(g, beta_id, &xs, tau, rng)?
        } else {
            soft_bin_graph(g, beta_id, &xs, tau)?
        };
        z = Some(match z {
            None => pi,
            Some(prev) => g.outer_flatten(prev, pi)?,
        });
    }
    let z = z.expect("models have at least one feature");
    let logits = g.matmul(z, score_id)?;
    let log_probs = g.log_softmax(logits, 1)?;
    g.nll_mean(log_probs, labels)
}

/// Mean cross-entropy of a model over a normalized dataset, soft routing.
pub fn loss(model: &DndtModel, dataset: &Dataset) -> Result<f64> {
    Ok(loss_and_gradients(model, dataset)?.loss)
}

#[derive(Debug, Clone)]
pub struct LossGradients {
    pub loss: f64,
    /// One gradient vector per feature's cut points.
    pub cutpoint_gradients: Vec<Vec<f64>>,
    /// Row-major [leaf_count, n_classes], matching the model's score layout.
    pub leaf_score_gradients: Vec<f64>,
}

/// Mean cross-entropy and its exact gradients with respect to every cut point
/// and leaf score, evaluated at the model's own temperatures.
pub fn loss_and_gradients(model: &DndtModel, dataset: &Dataset) -> Result<LossGradients> {
    if dataset.n_features() != model.n_features() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs: vec![dataset.n_features()],
            rhs: vec![model.n_features()],
        });
    }
    for &label in dataset.labels() {
        if label >= model.n_classes() {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: model.n_classes(),
            });
        }
    }
    let mut g = Graph::new();
    let beta_ids: Vec<NodeId> = model
        .binners()
        .iter()
        .map(|b| g.param(Tensor::vector(b.cutpoints().to_vec())))
        .collect();
    let score_id = g.param(Tensor::matrix(
        model.leaf_count(),
        model.n_classes(),
        model.leaf_scores().to_vec(),
    )?);
    let batch: Vec<usize> = (0..dataset.n_instances()).collect();
    let mut z: Option<NodeId> = None;
    for (d, &beta_id) in beta_ids.iter().enumerate() {
        let xs: Vec<f64> = batch.iter().map(|&i| dataset.row(i)[d]).collect();
        let tau = model.binners()[d].temperature();
        let pi = soft_bin_graph(&mut g, beta_id, &xs, tau)?;
        z = Some(match z {
            None => pi,
            Some(prev) => g.outer_flatten(prev, pi)?,
        });
    }
    let z = z.expect("models have at least one feature");
    let logits = g.matmul(z, score_id)?;
    let log_probs = g.log_softmax(logits, 1)?;
    let loss_id = g.nll_mean(log_probs, dataset.labels())?;
    let loss = g.value(loss_id).item()?;
    g.backward(loss_id)?;
    Ok(LossGradients {
        loss,
        cutpoint_gradients: beta_ids
            .iter()
            .map(|&id| g.grad(id).expect("backward fills every node").data().to_vec())
            .collect(),
        leaf_score_gradients: g
            .grad(score_id)
            .expect("backward fills every node")
            .data()
            .to_vec(),
    })
}

/// Per-parameter optimizer slots. Cut point vectors and the score matrix are
/// tracked separately; Adam's step counter is shared.
struct OptimizerState {
    cut_velocity: Vec<Vec<f64>>,
    cut_m: Vec<Vec<f64>>,
    cut_v: Vec<Vec<f64>>,
    score_velocity: Vec<f64>,
    score_m: Vec<f64>,
    score_v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    fn new(model: &DndtModel) -> Self {
        let cut_shapes: Vec<usize> = model.binners().iter().map(|b| b.n_cutpoints()).collect();
        let score_len = model.leaf_scores().len();
        OptimizerState {
            cut_velocity: cut_shapes.iter().map(|&n| vec![0.0; n]).collect(),
            cut_m: cut_shapes.iter().map(|&n| vec![0.0; n]).collect(),
            cut_v: cut_shapes.iter().map(|&n| vec![0.0; n]).collect(),
            score_velocity: vec![0.0; score_len],
            score_m: vec![0.0; score_len],
            score_v: vec![0.0; score_len],
            step: 0,
        }
    }

    fn step_cutpoints(&mut self, d: usize, params: &mut [f64], grads: &[f64], config: &TrainConfig) {
        // The score update bumps the shared Adam step; cut points piggyback on
        // the same counter within a batch.
        let step = self.step + 1;
        apply_update(
            params,
            grads,
            &mut self.cut_velocity[d],
            &mut self.cut_m[d],
            &mut self.cut_v[d],
            config.learning_rate,
            config.optimizer,
            step,
        );
    }

    fn step_scores(&mut self, params: &mut [f64], grads: &[f64], config: &TrainConfig) {
        self.step += 1;
        let grads: Vec<f64> = if config.weight_decay > 0.0 {
            grads
                .iter()
                .zip(params.iter())
                .map(|(&g, &p)| g + config.weight_decay * p)
                .collect()
        } else {
            grads.to_vec()
        };
        apply_update(
            params,
            &grads,
            &mut self.score_velocity,
            &mut self.score_m,
            &mut self.score_v,
            config.learning_rate,
            config.optimizer,
            self.step,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_update(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    optimizer: Optimizer,
    step: u64,
) {
    match optimizer {
        Optimizer::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        Optimizer::Momentum { momentum } => {
            for ((p, &g), vel) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                *vel = momentum * *vel + g;
                *p -= lr * *vel;
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let t = step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for (((p, &g), mi), vi) in params
                .iter_mut()
                .zip(grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}
