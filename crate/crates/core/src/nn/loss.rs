use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of a `[batch, classes]` tensor, stabilized by max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let classes = logits.row_len();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Sum of per-example negative log-likelihoods divided by `denom`, and its
/// gradient `(softmax - onehot) / denom`.
pub fn cross_entropy_scaled(logits: &Tensor, labels: &[usize], denom: f64) -> Result<(f64, Tensor)> {
    let (n, classes) = (logits.rows(), logits.row_len());
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut grad = Tensor::zeros(&[n, classes]);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[label];
        let g = &mut grad.data_mut()[i * classes..(i + 1) * classes];
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            *gv = (p - if c == label { 1.0 } else { 0.0 }) / denom;
        }
    }
    Ok((total / denom, grad))
}

/// Mean cross-entropy over the batch and `d loss / d logits`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    cross_entropy_scaled(logits, labels, logits.rows() as f64)
}
