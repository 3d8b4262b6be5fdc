//! Small numeric helpers shared across modules.

/// Index of the maximum, ties resolved to the lowest index. Used for class
/// predictions and vote tallies.
pub(crate) fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Index of the maximum, ties resolved to the highest index. Used for bin
/// activations, where a value sitting exactly on a boundary belongs to the
/// upper bin.
pub(crate) fn argmax_last(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v >= xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax over a slice.
pub(crate) fn softmax_vec(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_tie_conventions_differ() {
        let xs = [1.0, 3.0, 3.0, 0.5];
        assert_eq!(argmax_first(&xs), 1);
        assert_eq!(argmax_last(&xs), 2);
    }

    #[test]
    fn softmax_vec_normalizes() {
        let p = softmax_vec(&[1.0, 2.0, 3.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }
}
