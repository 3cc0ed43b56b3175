use rand::Rng as _;

use super::ZooConfig;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Number of tasks trained in the episode that introduces task `current`
/// (0-based), including the current task.
pub fn episode_beta(cfg: &ZooConfig, current: usize) -> usize {
    if cfg.replay_fraction == 0.0 {
        return 1;
    }
    let seen = current + 1;
    if cfg.beta_includes_current {
        seen.min(cfg.max_beta)
    } else {
        seen.min(cfg.max_beta + 1)
    }
}

/// The current task followed by `beta - 1` past tasks drawn one at a time,
/// without replacement, with probability proportional to `weights`
/// (renormalized after each draw). Tasks with zero weight are never drawn;
/// if fewer candidates remain than requested the selection is clamped.
pub fn select_tasks(weights: &[f64], current: usize, beta: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if beta == 0 {
        return Err(Error::InvalidArgument("beta must be at least 1".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("task weights must be finite and non-negative".into()));
    }
    let mut selection = vec![current];
    let mut candidates: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .filter(|&(i, &w)| i != current && w > 0.0)
        .map(|(i, &w)| (i, w))
        .collect();
    if beta - 1 > candidates.len() {
        log::info!(
            "beta {beta} exceeds the {} available past tasks; clamping",
            candidates.len()
        );
    }
    while selection.len() < beta && !candidates.is_empty() {
        let total: f64 = candidates.iter().map(|(_, w)| w).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = candidates.len() - 1;
        for (j, (_, w)) in candidates.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = j;
                break;
            }
        }
        selection.push(candidates.remove(pick).0);
    }
    Ok(selection)
}
