use super::Tensor;
use crate::error::{Error, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of one logit row against an integer label, with its gradient.
pub fn softmax_xent(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = log_total - (logits[label] - max);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over a `[N, C]` batch; the gradient is scaled by `1/N`.
pub fn softmax_xent_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let c = logits.row_len();
    let n = logits.batch();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * c);
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        let (l, g) = softmax_xent(row, label)?;
        total += l;
        grad.extend(g.into_iter().map(|v| v / n as f64));
    }
    Ok((total / n as f64, Tensor::new(logits.shape().to_vec(), grad)?))
}
