//! Cross-entropy losses: softmax over class logits and the binary
//! (logistic) form used by mask and point targets.

use crate::error::{Error, Result};
use crate::tensor::activation::sigmoid;
use crate::tensor::Matrix;

/// Mean over rows of `-log softmax(logits)[label]`.
///
/// An empty batch is defined as 0 (degenerate-batch convention).
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows != labels.len() {
        return Err(Error::shape(format!(
            "softmax_cross_entropy: {} logit rows vs {} labels",
            logits.rows,
            labels.len()
        )));
    }
    if logits.rows == 0 {
        return Ok(0.0);
    }
    let k = logits.cols;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::config(format!(
                "softmax_cross_entropy: label {label} out of range for {k} classes"
            )));
        }
        let row = logits.row(r);
        // log-sum-exp with max subtraction for stability
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / logits.rows as f64)
}

/// Gradient of [`softmax_cross_entropy`] with respect to the logits:
/// `(softmax - onehot) / N`, scaled by `upstream`.
pub fn softmax_cross_entropy_backward(
    logits: &Matrix,
    labels: &[usize],
    upstream: f64,
) -> Matrix {
    let mut grad = logits.zeros_like();
    if logits.rows == 0 {
        return grad;
    }
    let scale = upstream / logits.rows as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        for c in 0..logits.cols {
            let p = (row[c] - m).exp() / denom;
            let onehot = if c == label { 1.0 } else { 0.0 };
            *grad.at_mut(r, c) = scale * (p - onehot);
        }
    }
    grad
}

/// Binary cross-entropy of a logit against a {0,1} target, the stable
/// `max(z,0) - z y + ln(1 + exp(-|z|))` form.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// `d bce / d z = sigmoid(z) - y`.
pub fn bce_with_logit_grad(z: f64, y: f64) -> f64 {
    sigmoid(z) - y
}

/// Mean binary cross-entropy over parallel slices; empty input is 0.
pub fn mean_bce(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::shape(format!(
            "mean_bce: {} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = logits.iter().zip(targets).map(|(&z, &y)| bce_with_logit(z, y)).sum();
    Ok(total / logits.len() as f64)
}

/// Gradient of [`mean_bce`] with respect to the logits, scaled by `upstream`.
pub fn mean_bce_backward(logits: &[f64], targets: &[f64], upstream: f64) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let scale = upstream / logits.len() as f64;
    logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| scale * bce_with_logit_grad(z, y))
        .collect()
}
