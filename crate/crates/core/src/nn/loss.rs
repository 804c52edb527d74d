//! MAE loss over a batch of scalar predictions.

use crate::error::{Error, Result};

/// Returns (mean |pred − target|, dloss/dpred). The subgradient at exact
/// equality is taken as 0.
pub fn mae_loss(preds: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if preds.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            a: preds.len(),
            b: targets.len(),
        });
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(preds.len());
    for (&p, &t) in preds.iter().zip(targets) {
        let d = p - t;
        loss += d.abs();
        grad.push(if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        });
    }
    Ok((loss / n, grad))
}
