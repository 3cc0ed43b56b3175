use super::ZooState;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `sum_m w_m * p_m` for probability tensors of equal shape. Weights are
/// expected to be normalized already.
pub fn combine_weighted(parts: &[(f64, Tensor)]) -> Result<Tensor> {
    let (_, first) = parts.first().ok_or(Error::EmptyEnsemble)?;
    let mut out = Tensor::zeros(first.shape());
    for (w, p) in parts {
        if p.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "member outputs {:?} and {:?} differ",
                p.shape(),
                first.shape()
            )));
        }
        for (o, v) in out.data_mut().iter_mut().zip(p.data()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Class probabilities for `task`: the mean of the members trained on it,
/// each weighted by the share of the task's data it was trained on.
pub fn ensemble_predict(zoo: &ZooState, task: usize, batch: &Tensor) -> Result<Tensor> {
    let weights = zoo.task_weights(task)?;
    let parts = weights
        .into_iter()
        .map(|(m, w)| Ok((w, zoo.members[m].network.predict_proba(task, batch)?)))
        .collect::<Result<Vec<_>>>()?;
    combine_weighted(&parts)
}
