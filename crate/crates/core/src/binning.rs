//! Soft binning: the differentiable replacement for hard threshold splits.
//!
//! A feature with `n` cut points [b1..bn] (sorted ascending) is binned by a
//! tiny one-layer network with fixed weights w = [1, 2, ..., n+1] and bias
//! b = [0, -b1, -b1-b2, ..., -(b1+...+bn)]. For scalar input x the logit of
//! bin k is (k+1)*x + b[k]; consecutive logits cross exactly at the cut
//! points, so softmax((w*x + b) / t) approaches the indicator of the hard bin
//! as the temperature t shrinks.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::util::{argmax_last, softmax_vec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One feature's binning state: trainable cut points plus the temperature they
/// are currently evaluated at. Cut points are stored raw (possibly unsorted,
/// as training leaves them); every evaluation sorts them first.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SoftBinner {
    cutpoints: Vec<f64>,
    temperature: f64,
}

impl SoftBinner {
    pub fn new(cutpoints: Vec<f64>, temperature: f64) -> Result<Self> {
        if cutpoints.is_empty() {
            return Err(Error::InvalidOperation {
                op: "soft_binner",
                message: "at least one cut point required".into(),
            });
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::InvalidOperation {
                op: "soft_binner",
                message: format!("temperature must be positive, got {}", temperature),
            });
        }
        Ok(SoftBinner {
            cutpoints,
            temperature,
        })
    }

    pub fn n_cutpoints(&self) -> usize {
        self.cutpoints.len()
    }

    pub fn n_bins(&self) -> usize {
        self.cutpoints.len() + 1
    }

    pub fn cutpoints(&self) -> &[f64] {
        &self.cutpoints
    }

    pub fn set_cutpoints(&mut self, cutpoints: Vec<f64>) -> Result<()> {
        if cutpoints.len() != self.cutpoints.len() {
            return Err(Error::InvalidOperation {
                op: "soft_binner",
                message: format!(
                    "cut point count changed from {} to {}",
                    self.cutpoints.len(),
                    cutpoints.len()
                ),
            });
        }
        self.cutpoints = cutpoints;
        Ok(())
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::InvalidOperation {
                op: "soft_binner",
                message: format!("temperature must be positive, got {}", temperature),
            });
        }
        self.temperature = temperature;
        Ok(())
    }

    /// Cut points sorted ascending with exact duplicates nudged apart, the
    /// form every binning evaluation actually uses.
    pub fn sorted_cutpoints(&self) -> Vec<f64> {
        sort_cutpoints(&self.cutpoints)
    }

    /// The fixed weight vector [1, 2, ..., n+1].
    pub fn weights(&self) -> Vec<f64> {
        (1..=self.n_bins()).map(|k| k as f64).collect()
    }
}

/// Sort ascending and nudge exact duplicates apart by 1e-12, mirroring the
/// graph-side `sort_ascending` op.
pub fn sort_cutpoints(cutpoints: &[f64]) -> Vec<f64> {
    let mut out = cutpoints.to_vec();
    out.sort_by(f64::total_cmp);
    for i in 1..out.len() {
        if out[i] <= out[i - 1] {
            out[i] = out[i - 1] + 1e-12;
        }
    }
    out
}

/// Bias vector [0, -b1, -b1-b2, ...] for cut points sorted ascending.
pub fn build_bias(sorted_cutpoints: &[f64]) -> Result<Vec<f64>> {
    if sorted_cutpoints.is_empty() {
        return Err(Error::InvalidOperation {
            op: "build_bias",
            message: "at least one cut point required".into(),
        });
    }
    let mut bias = vec![0.0; sorted_cutpoints.len() + 1];
    let mut acc = 0.0;
    for (i, &b) in sorted_cutpoints.iter().enumerate() {
        acc -= b;
        bias[i + 1] = acc;
    }
    Ok(bias)
}

/// Per-bin membership probabilities for one scalar input.
#[derive(Debug, Clone, PartialEq)]
pub struct BinActivation {
    pub probabilities: Vec<f64>,
}

impl BinActivation {
    /// Most likely bin; ties go to the upper bin so that a value exactly on a
    /// boundary agrees with [`hard_bin`].
    pub fn argmax(&self) -> usize {
        argmax_last(&self.probabilities)
    }
}

/// Softmax bin membership of `x` under the binner's cut points and
/// temperature.
pub fn soft_bin(x: f64, binner: &SoftBinner) -> Result<BinActivation> {
    let sorted = binner.sorted_cutpoints();
    let bias = build_bias(&sorted)?;
    let tau = binner.temperature();
    let logits: Vec<f64> = bias
        .iter()
        .enumerate()
        .map(|(k, &b)| ((k + 1) as f64 * x + b) / tau)
        .collect();
    Ok(BinActivation {
        probabilities: softmax_vec(&logits),
    })
}

/// Index of the hard bin: the number of cut points at or below `x`. A value
/// exactly equal to a cut point lands in the upper bin.
pub fn hard_bin(x: f64, sorted_cutpoints: &[f64]) -> usize {
    sorted_cutpoints.iter().filter(|&&b| b <= x).count()
}

/// One straight-through Gumbel sample of the bin membership: the returned
/// activation is one-hot at argmax(logits/t + gumbel noise).
pub fn st_gumbel_bin<R: Rng + ?Sized>(
    x: f64,
    binner: &SoftBinner,
    rng: &mut R,
) -> Result<BinActivation> {
    let soft = soft_bin(x, binner)?;
    let mut perturbed: Vec<f64> = soft
        .probabilities
        .iter()
        .map(|&p| {
            let u: f64 = rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12);
            p.max(1e-300).ln() + (-(-u.ln()).ln())
        })
        .collect();
    // ln(softmax) differs from logits/t by a constant, so the perturbed
    // argmax distribution is the standard Gumbel-softmax one.
    let best = argmax_last(&perturbed);
    for (i, p) in perturbed.iter_mut().enumerate() {
        *p = if i == best { 1.0 } else { 0.0 };
    }
    Ok(BinActivation {
        probabilities: perturbed,
    })
}

/// Temperature over training epochs: `max(floor, initial * decay^epoch)`.
/// `decay = 1` keeps the temperature constant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TemperatureSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl TemperatureSchedule {
    pub fn constant(temperature: f64) -> Self {
        TemperatureSchedule {
            initial: temperature,
            decay: 1.0,
            floor: temperature,
        }
    }

    pub fn annealed(initial: f64, decay: f64, floor: f64) -> Self {
        TemperatureSchedule {
            initial,
            decay,
            floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial.is_finite() && self.initial > 0.0 && self.floor.is_finite() && self.floor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperatures must be positive (initial {}, floor {})",
                self.initial, self.floor
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        if self.floor > self.initial {
            return Err(Error::InvalidConfig(format!(
                "temperature floor {} above initial {}",
                self.floor, self.initial
            )));
        }
        Ok(())
    }

    pub fn temperature_at(&self, epoch: usize) -> f64 {
        (self.initial * self.decay.powi(epoch as i32)).max(self.floor)
    }
}

/// Validated schedule lookup, for callers holding unchecked schedule values.
pub fn anneal_temperature(schedule: &TemperatureSchedule, epoch: usize) -> Result<f64> {
    schedule.validate()?;
    Ok(schedule.temperature_at(epoch))
}

/// Graph-side soft binning of a whole feature column. `beta` is the rank-1
/// cut point parameter node; `xs` holds the column's values for the batch.
/// Returns a [batch, n+1] node of bin probabilities.
pub fn soft_bin_graph(g: &mut Graph, beta: NodeId, xs: &[f64], tau: f64) -> Result<NodeId> {
    let logits = bin_logits_graph(g, beta, xs, tau)?;
    g.softmax(logits, 1)
}

/// Graph-side straight-through Gumbel binning of a feature column: one-hot
/// forward, soft backward.
pub fn st_gumbel_bin_graph<R: Rng + ?Sized>(
    g: &mut Graph,
    beta: NodeId,
    xs: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<NodeId> {
    let logits = bin_logits_graph(g, beta, xs, tau)?;
    g.st_gumbel_softmax(logits, rng)
}

/// Shared logit construction: sort the cut points, build the bias, broadcast
/// it over the fixed-weight feature response, scale by 1/t.
fn bin_logits_graph(g: &mut Graph, beta: NodeId, xs: &[f64], tau: f64) -> Result<NodeId> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidOperation {
            op: "bin_logits",
            message: format!("temperature must be positive, got {}", tau),
        });
    }
    let n = g.value(beta).len();
    if n == 0 {
        return Err(Error::InvalidOperation {
            op: "bin_logits",
            message: "at least one cut point required".into(),
        });
    }
    let sorted = g.sort_ascending(beta)?;
    let bias = g.cutpoint_bias(sorted)?;
    let bins = n + 1;
    let mut wx = vec![0.0; xs.len() * bins];
    for (i, &x) in xs.iter().enumerate() {
        for k in 0..bins {
            wx[i * bins + k] = (k + 1) as f64 * x;
        }
    }
    let wx = g.constant(Tensor::matrix(xs.len(), bins, wx)?);
    let logits = g.add_row(wx, bias)?;
    Ok(g.mul_scalar(logits, 1.0 / tau))
}

/// Cut points placed at equally spaced quantiles of `values`: for n cut
/// points, quantiles 1/(n+1), ..., n/(n+1) with linear interpolation.
pub fn quantile_cutpoints(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyDataset(
            "cannot place quantile cut points on an empty column".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "at least one cut point per feature required".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let pos = (k as f64 / (n + 1) as f64) * last;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        out.push(sorted[lo] * (1.0 - frac) + sorted[hi] * frac);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bias_for_two_cutpoints_matches_hand_values() {
        let bias = build_bias(&[0.33, 0.66]).unwrap();
        assert_relative_eq!(bias[0], 0.0);
        assert_relative_eq!(bias[1], -0.33);
        assert_relative_eq!(bias[2], -0.99, max_relative = 1e-12);
    }

    #[test]
    fn midpoint_input_with_unit_temperature_stays_soft() {
        // Cut points 0.33/0.66 at x = 0.5, t = 1: logits (0.5, 0.67, 0.51),
        // probabilities about (0.313, 0.371, 0.316), middle bin on top but
        // far from saturated.
        let binner = SoftBinner::new(vec![0.33, 0.66], 1.0).unwrap();
        let act = soft_bin(0.5, &binner).unwrap();
        assert!((act.probabilities[0] - 0.3130).abs() < 5e-4);
        assert!((act.probabilities[1] - 0.3709).abs() < 5e-4);
        assert!((act.probabilities[2] - 0.3161).abs() < 5e-4);
        assert_eq!(act.argmax(), 1);
        let sum: f64 = act.probabilities.iter().sum();
        assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn low_temperature_sharpens_the_same_activation() {
        let soft = SoftBinner::new(vec![0.33, 0.66], 1.0).unwrap();
        let sharp = SoftBinner::new(vec![0.33, 0.66], 0.01).unwrap();
        let p_soft = soft_bin(0.5, &soft).unwrap().probabilities[1];
        let p_sharp = soft_bin(0.5, &sharp).unwrap().probabilities[1];
        assert!(p_sharp > 0.999, "got {}", p_sharp);
        assert!(p_soft < 0.5);
    }

    #[test]
    fn hard_bin_counts_cutpoints_at_or_below() {
        let cuts = [0.33, 0.66];
        assert_eq!(hard_bin(0.2, &cuts), 0);
        assert_eq!(hard_bin(0.33, &cuts), 1);
        assert_eq!(hard_bin(0.5, &cuts), 1);
        assert_eq!(hard_bin(0.66, &cuts), 2);
        assert_eq!(hard_bin(0.9, &cuts), 2);
    }

    #[test]
    fn boundary_value_agrees_between_soft_argmax_and_hard_bin() {
        // Exactly on a cut point the two adjacent logits tie; the soft argmax
        // must fall in the upper bin like the hard rule does.
        let binner = SoftBinner::new(vec![0.33, 0.66], 0.01).unwrap();
        let act = soft_bin(0.33, &binner).unwrap();
        assert_eq!(act.argmax(), hard_bin(0.33, &binner.sorted_cutpoints()));
    }

    #[test]
    fn unsorted_cutpoints_are_evaluated_sorted() {
        let unsorted = SoftBinner::new(vec![0.66, 0.33], 1.0).unwrap();
        let sorted = SoftBinner::new(vec![0.33, 0.66], 1.0).unwrap();
        let a = soft_bin(0.5, &unsorted).unwrap();
        let b = soft_bin(0.5, &sorted).unwrap();
        assert_eq!(a.probabilities, b.probabilities);
    }

    #[test]
    fn graph_binning_matches_scalar_binning_per_row() {
        let binner = SoftBinner::new(vec![0.66, 0.33], 0.7).unwrap();
        let xs = [0.05, 0.33, 0.5, 0.72, 1.0];
        let mut g = Graph::new();
        let beta = g.param(Tensor::vector(vec![0.66, 0.33]));
        let probs = soft_bin_graph(&mut g, beta, &xs, 0.7).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let scalar = soft_bin(x, &binner).unwrap();
            for k in 0..3 {
                assert_relative_eq!(
                    g.value(probs).at(i, k),
                    scalar.probabilities[k],
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn schedule_decays_to_floor() {
        let s = TemperatureSchedule::annealed(0.1, 0.95, 0.01);
        assert_relative_eq!(s.temperature_at(0), 0.1);
        assert_relative_eq!(s.temperature_at(1), 0.095);
        assert!(s.temperature_at(100) >= 0.01);
        assert_relative_eq!(s.temperature_at(1000), 0.01);
        let c = TemperatureSchedule::constant(0.1);
        assert_relative_eq!(c.temperature_at(500), 0.1);
        assert!(anneal_temperature(&s, 2).is_ok());
        assert!(anneal_temperature(&TemperatureSchedule::annealed(0.1, 1.5, 0.01), 0).is_err());
    }

    #[test]
    fn st_gumbel_bin_is_one_hot_and_tracks_soft_probabilities() {
        let binner = SoftBinner::new(vec![0.33, 0.66], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let trials = 4000;
        for _ in 0..trials {
            let act = st_gumbel_bin(0.5, &binner, &mut rng).unwrap();
            let ones = act.probabilities.iter().filter(|&&p| p == 1.0).count();
            assert_eq!(ones, 1);
            counts[act.argmax()] += 1;
        }
        let expected = soft_bin(0.5, &binner).unwrap().probabilities;
        for (c, e) in counts.iter().zip(expected) {
            let freq = *c as f64 / trials as f64;
            assert!((freq - e).abs() < 0.05, "freq {} vs soft {}", freq, e);
        }
    }

    #[test]
    fn quantile_cutpoints_interpolate() {
        let values: Vec<f64> = (0..=10).map(|v| v as f64).collect();
        assert_eq!(quantile_cutpoints(&values, 1).unwrap(), vec![5.0]);
        let three = quantile_cutpoints(&values, 3).unwrap();
        assert_relative_eq!(three[0], 2.5);
        assert_relative_eq!(three[1], 5.0);
        assert_relative_eq!(three[2], 7.5);
    }

    #[test]
    fn invalid_construction_is_rejected() {
        assert!(SoftBinner::new(vec![], 1.0).is_err());
        assert!(SoftBinner::new(vec![0.5], 0.0).is_err());
        assert!(SoftBinner::new(vec![0.5], -1.0).is_err());
        assert!(build_bias(&[]).is_err());
        assert!(quantile_cutpoints(&[], 1).is_err());
        assert!(quantile_cutpoints(&[1.0], 0).is_err());
    }
}
