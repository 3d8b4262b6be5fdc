//! Per-class evaluation metrics from hard predictions.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True instances of this class.
    pub support: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub n_instances: usize,
    pub per_class: Vec<ClassMetrics>,
    /// confusion[actual][predicted].
    pub confusion: Vec<Vec<usize>>,
}

/// Metrics with an empty denominator (no predictions for a class, or no true
/// instances) report 0 rather than NaN so the output stays machine-readable.
pub fn evaluate(labels: &[usize], predictions: &[usize], class_names: &[String]) -> EvalSummary {
    assert_eq!(labels.len(), predictions.len());
    let c = class_names.len();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut hits = 0usize;
    for (&y, &p) in labels.iter().zip(predictions) {
        confusion[y][p] += 1;
        if y == p {
            hits += 1;
        }
    }
    let per_class = class_names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let precision = if predicted > 0 {
                tp as f64 / predicted as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp as f64 / support as f64
            } else {
                0.0
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: name.clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    EvalSummary {
        accuracy: hits as f64 / labels.len().max(1) as f64,
        n_instances: labels.len(),
        per_class,
        confusion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("c{}", k)).collect()
    }

    #[test]
    fn metrics_match_hand_computation() {
        // Class 0: tp=2, fp=1, fn=0. Class 1: tp=1, fp=0, fn=1.
        let labels = [0, 0, 1, 1];
        let preds = [0, 0, 0, 1];
        let s = evaluate(&labels, &preds, &names(2));
        assert_relative_eq!(s.accuracy, 0.75);
        assert_relative_eq!(s.per_class[0].precision, 2.0 / 3.0);
        assert_relative_eq!(s.per_class[0].recall, 1.0);
        assert_relative_eq!(s.per_class[0].f1, 0.8);
        assert_relative_eq!(s.per_class[1].precision, 1.0);
        assert_relative_eq!(s.per_class[1].recall, 0.5);
        assert_relative_eq!(s.per_class[1].f1, 2.0 / 3.0);
        assert_eq!(s.per_class[0].support, 2);
        assert_eq!(s.confusion, vec![vec![2, 0], vec![1, 1]]);
    }

    #[test]
    fn empty_denominators_report_zero() {
        // Class 2 never appears and is never predicted.
        let labels = [0, 1];
        let preds = [1, 0];
        let s = evaluate(&labels, &preds, &names(3));
        assert_relative_eq!(s.accuracy, 0.0);
        for m in &s.per_class {
            assert_relative_eq!(m.precision, 0.0);
            assert_relative_eq!(m.recall, 0.0);
            assert_relative_eq!(m.f1, 0.0);
        }
        assert_eq!(s.per_class[2].support, 0);
    }
}
