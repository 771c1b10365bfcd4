use crate::error::{NnError, Result};
use crate::tensor::Tensor;

const EPS: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `pred`.
///
/// Predictions are clamped to `[1e-7, 1 - 1e-7]`; targets may be soft.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "bce: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(EPS, 1.0 - EPS);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        grad.push((p - t) / (p * (1.0 - p)) / n);
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
