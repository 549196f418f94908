//! Softmax cross-entropy over raw logits.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

/// Mean negative log-likelihood and its logit gradient.
///
/// Rows are stabilized by max subtraction; sums run in f64. The gradient
/// carries the 1/batch factor so it feeds the backward pass directly.
pub fn softmax_cross_entropy(logits: &FloatTensor, labels: &[u32]) -> Result<(f64, FloatTensor)> {
    let [batch, classes] = logits.dims2()?;
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::shape(format!(
            "label {l} out of range for {classes} classes"
        )));
    }
    let ld = logits.data();
    let mut grad = vec![0.0f32; ld.len()];
    let mut loss = 0.0f64;
    let inv_batch = 1.0 / batch as f64;
    for (row, &label) in labels.iter().enumerate() {
        let xs = &ld[row * classes..(row + 1) * classes];
        let m = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        for &v in xs {
            sum += (v as f64 - m).exp();
        }
        let log_sum = m + sum.ln();
        loss += (log_sum - xs[label as usize] as f64) * inv_batch;
        for (j, &v) in xs.iter().enumerate() {
            let p = (v as f64 - m).exp() / sum;
            let onehot = if j == label as usize { 1.0 } else { 0.0 };
            grad[row * classes + j] = ((p - onehot) * inv_batch) as f32;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss diverged to {loss}")));
    }
    Ok((loss, FloatTensor::from_parts(vec![batch, classes], grad)))
}
