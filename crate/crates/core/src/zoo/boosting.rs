use super::ensemble::combine_weighted;
use super::{MemberOutputs, ZooState};
use crate::error::{Error, Result};
use crate::tasks::TaskStream;
use crate::tensor::Tensor;

/// Upper clip on a task's mean ensemble loss before exponentiation.
pub const LOSS_CLIP: f64 = 50.0;

/// `w_i ∝ exp(clip(L_i, 0, LOSS_CLIP))` over tasks with a loss, 0 elsewhere.
pub fn weights_from_losses(losses: &[Option<f64>]) -> Vec<f64> {
    let clipped: Vec<Option<f64>> = losses
        .iter()
        .map(|l| l.map(|v| if v.is_nan() { LOSS_CLIP } else { v.clamp(0.0, LOSS_CLIP) }))
        .collect();
    let max = clipped.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; losses.len()];
    }
    let raw: Vec<f64> = clipped.iter().map(|l| l.map_or(0.0, |v| (v - max).exp())).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Mean negative log-likelihood of each seen task's stored examples under
/// the current ensemble.
pub(crate) fn ensemble_losses(zoo: &ZooState, tasks: &TaskStream, seen: usize) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; tasks.len()];
    for (i, slot) in out.iter_mut().enumerate().take(seen) {
        let task = tasks.get(i)?;
        let stored: Vec<usize> = task.replay_store().map(|e| e.label).collect();
        if stored.is_empty() {
            return Err(Error::EmptyDataset(format!("task {i} has no stored examples")));
        }
        let probs = ensemble_replay_probs(zoo, tasks, i)?;
        let nll: f64 = stored
            .iter()
            .enumerate()
            .map(|(r, &y)| -probs.row(r)[y].ln())
            .sum::<f64>()
            / stored.len() as f64;
        *slot = Some(nll);
    }
    Ok(out)
}

fn ensemble_replay_probs(zoo: &ZooState, tasks: &TaskStream, task: usize) -> Result<Tensor> {
    let weights = zoo.task_weights(task)?;
    let mut parts = Vec::with_capacity(weights.len());
    for &(m, w) in &weights {
        let probs = match zoo.outputs(m, task) {
            Some(MemberOutputs { replay: Some(r), .. }) => r.clone(),
            _ => {
                let t = tasks.get(task)?;
                let x = Tensor::stack(t.replay_store().map(|e| &e.input))?;
                zoo.members[m].network.predict_proba(task, &x)?
            }
        };
        parts.push((w, probs));
    }
    combine_weighted(&parts)
}

/// Boosting weights over the first `seen` tasks of the stream.
pub fn boosting_weights(zoo: &ZooState, tasks: &TaskStream, seen: usize) -> Result<Vec<f64>> {
    if zoo.members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(weights_from_losses(&ensemble_losses(zoo, tasks, seen)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_losses_give_uniform_weights() {
        let w = weights_from_losses(&[Some(0.7), Some(0.7), Some(0.7), None]);
        for v in &w[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(w[3], 0.0);
    }

    #[test]
    fn zero_and_ln2_give_one_third_two_thirds() {
        let w = weights_from_losses(&[Some(0.0), Some(std::f64::consts::LN_2)]);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn huge_and_infinite_losses_are_clipped() {
        let w = weights_from_losses(&[Some(f64::INFINITY), Some(1e6), Some(0.0)]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w[0] - w[1]).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
