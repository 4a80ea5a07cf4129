//! Softmax and the weighted cross-entropy loss.

use super::Scalar;
use crate::error::{Error, Result};

/// Probabilities are clamped at this floor before taking logs.
const LOG_CLAMP: f64 = 1e-12;

/// Numerically stable softmax: exponentials are taken after subtracting the
/// maximum logit, which leaves the result shift-invariant.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits
        .iter()
        .fold(F::neg_infinity(), |m, &v| if v > m { v } else { m });
    let exps: Vec<F> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(F::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Weighted mean cross-entropy over a batch:
/// `L = -sum_i w_i * log(p_i[y_i]) / sum_i w_i`.
///
/// Weights must be non-negative and not all zero; examples with zero weight
/// contribute nothing.
pub fn weighted_cross_entropy<F: Scalar>(
    probs: &[Vec<F>],
    labels: &[u8],
    weights: &[F],
) -> Result<F> {
    if probs.len() != labels.len() || probs.len() != weights.len() {
        return Err(Error::InvalidTraining(format!(
            "{} probabilities vs {} labels vs {} weights",
            probs.len(),
            labels.len(),
            weights.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::InvalidTraining("empty batch".into()));
    }
    let mut weight_sum = F::zero();
    let mut loss_sum = F::zero();
    let clamp = F::cast(LOG_CLAMP);
    for ((p, &y), &w) in probs.iter().zip(labels).zip(weights) {
        if w < F::zero() {
            return Err(Error::InvalidTraining("negative sample weight".into()));
        }
        let y = y as usize;
        if y >= p.len() {
            return Err(Error::InvalidTraining(format!(
                "label {y} outside the {}-class output",
                p.len()
            )));
        }
        let clamped = if p[y] < clamp { clamp } else { p[y] };
        loss_sum = loss_sum + w * (-clamped.ln());
        weight_sum = weight_sum + w;
    }
    if weight_sum == F::zero() {
        return Err(Error::InvalidTraining("all sample weights are zero".into()));
    }
    Ok(loss_sum / weight_sum)
}
