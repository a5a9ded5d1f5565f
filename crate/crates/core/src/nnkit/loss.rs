use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::math::{sigmoid, softplus};

/// Mean squared error over all elements; returns `(loss, d loss / d pred)`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(arg_err!("mse: {} predictions vs {} targets", pred.len(), target.len()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Weighted binary cross-entropy on logits, averaged over timesteps:
/// `sum_t w_t * BCE(sigmoid(z_t), y_t) / T`. Returns `(loss, d loss / d z)`.
pub fn weighted_bce_with_logits(logits: &[f64], targets: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() || logits.len() != weights.len() || logits.is_empty() {
        return Err(arg_err!("weighted BCE: mismatched lengths"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(targets)
        .zip(weights)
        .map(|((&z, &y), &w)| {
            loss += w * (softplus(z) - y * z);
            w * (sigmoid(z) - y) / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_is_zero() {
        let x = [0.3, -1.2, 4.0];
        let (l, g) = mse(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_matches_probability_form() {
        let (l, _) = weighted_bce_with_logits(&[0.0, 2.0], &[1.0, 0.0], &[1.0, 0.5]).unwrap();
        let p1: f64 = 0.5;
        let p2 = 1.0 / (1.0 + (-2.0f64).exp());
        let want = (-(p1.ln()) - 0.5 * (1.0 - p2).ln()) / 2.0;
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(weighted_bce_with_logits(&[1.0], &[1.0], &[]).is_err());
    }
}
