//! Central finite-difference verification of backpropagated gradients.

use super::loss::softmax_cross_entropy;
use super::network::{Mode, MultiHeadNetwork};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn loss_at(net: &MultiHeadNetwork, task: usize, batch: &Tensor, labels: &[usize], mode: Mode) -> Result<f64> {
    let (logits, _) = net.forward(task, batch, mode)?;
    Ok(softmax_cross_entropy(&logits, labels)?.0)
}

/// Compares backprop against central differences for every parameter element.
/// `mode` must be deterministic: [`Mode::Deterministic`] (batch statistics,
/// no dropout) or [`Mode::Eval`] (running statistics).
pub fn grad_check_report(
    net: &MultiHeadNetwork,
    task: usize,
    batch: &Tensor,
    labels: &[usize],
    epsilon: f64,
    mode: Mode,
) -> Result<GradCheckReport> {
    if matches!(mode, Mode::Train { .. }) {
        return Err(Error::InvalidArgument("gradient check needs a deterministic mode".into()));
    }
    let (logits, cache) = net.forward(task, batch, mode)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, labels)?;
    let analytic = net.backward(&cache, &dlogits, task)?;
    let names: Vec<String> = net.param_info().into_iter().map(|p| p.name).collect();

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (p, grad) in analytic.tensors.iter().enumerate() {
        for i in 0..grad.len() {
            let original = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = original + epsilon;
            let plus = loss_at(&probe, task, batch, labels, mode)?;
            probe.params_mut()[p].data_mut()[i] = original - epsilon;
            let minus = loss_at(&probe, task, batch, labels, mode)?;
            probe.params_mut()[p].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.0.is_empty() {
                report.max_rel_error = err;
                report.worst = (names[p].clone(), i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Maximum element-wise relative error between backprop and central
/// differences, with dropout disabled and batch statistics fixed by the batch.
pub fn grad_check(
    net: &MultiHeadNetwork,
    task: usize,
    batch: &Tensor,
    labels: &[usize],
    epsilon: f64,
) -> Result<f64> {
    Ok(grad_check_report(net, task, batch, labels, epsilon, Mode::Deterministic)?.max_rel_error)
}
