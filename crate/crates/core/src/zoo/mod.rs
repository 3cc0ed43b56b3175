//! The Model Zoo continual learner and its baselines.

mod boosting;
mod ensemble;
mod learner;
mod runlog;
mod select;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use boosting::{boosting_weights, weights_from_losses, LOSS_CLIP};
pub use ensemble::{combine_weighted, ensemble_predict};
pub use learner::{
    multihead_accuracies, run_continual, run_multihead_baseline, train_episode, EpisodeRecord,
    Learner, Seeds,
};
pub use runlog::RunLog;
pub use select::{episode_beta, select_tasks};

use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::tasks::TaskStream;
use crate::nn::MultiHeadNetwork;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Past tasks drawn with probability proportional to exp(ensemble loss).
    Boosted,
    /// Past tasks drawn uniformly.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooConfig {
    /// Cap `B` in `beta = min(k, B)`.
    pub max_beta: usize,
    /// Whether `beta` counts the current task (otherwise current + `beta` past tasks).
    pub beta_includes_current: bool,
    /// Share of each past task's training data that may be replayed. 0 gives
    /// the Isolated learner; values in (0, 1) give limited replay.
    pub replay_fraction: f64,
    pub sampling: Sampling,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self {
            max_beta: 5,
            beta_includes_current: true,
            replay_fraction: 1.0,
            sampling: Sampling::Boosted,
        }
    }
}

impl ZooConfig {
    pub fn isolated() -> Self {
        Self {
            replay_fraction: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(Error::InvalidArgument(format!(
                "replay_fraction {} outside [0, 1]",
                self.replay_fraction
            )));
        }
        if self.max_beta == 0 {
            return Err(Error::InvalidArgument("max_beta must be at least 1".into()));
        }
        Ok(())
    }
}

/// One network of the zoo, frozen after the episode that trained it.
#[derive(Debug, Clone)]
pub struct ZooMember {
    pub network: MultiHeadNetwork,
    /// Tasks trained in this member's episode, current task first.
    pub trained_tasks: Vec<usize>,
    /// Share of each trained task's data the member saw.
    pub data_fraction: BTreeMap<usize, f64>,
    pub episode: usize,
}

impl ZooMember {
    pub fn trained_on(&self, task: usize) -> bool {
        self.data_fraction.contains_key(&task)
    }
}

/// Cached member outputs on a task's validation and replay examples.
#[derive(Debug, Clone)]
pub(crate) struct MemberOutputs {
    pub val: Tensor,
    pub replay: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct ZooState {
    pub members: Vec<ZooMember>,
    /// Tasks `0..seen` have been presented.
    pub seen: usize,
    /// Task sampling weights after the latest episode; zero for unseen tasks.
    pub boost_weights: Vec<f64>,
    outputs: Vec<BTreeMap<usize, MemberOutputs>>,
}

impl ZooState {
    pub fn new(n_tasks: usize) -> Self {
        Self {
            members: Vec::new(),
            seen: 0,
            boost_weights: vec![0.0; n_tasks],
            outputs: Vec::new(),
        }
    }

    /// Adds a member without cached outputs.
    pub fn push(&mut self, member: ZooMember) {
        self.members.push(member);
        self.outputs.push(BTreeMap::new());
    }

    pub(crate) fn push_with_outputs(&mut self, member: ZooMember, outputs: BTreeMap<usize, MemberOutputs>) {
        self.members.push(member);
        self.outputs.push(outputs);
    }

    pub(crate) fn outputs(&self, member: usize, task: usize) -> Option<&MemberOutputs> {
        self.outputs.get(member).and_then(|m| m.get(&task))
    }

    /// Members trained on `task`, with their normalized ensemble weights.
    pub fn task_weights(&self, task: usize) -> Result<Vec<(usize, f64)>> {
        let covering: Vec<(usize, f64)> = self
            .members
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.data_fraction.get(&task).map(|&f| (i, f)))
            .collect();
        if covering.is_empty() {
            return Err(if self.members.is_empty() {
                Error::EmptyEnsemble
            } else {
                Error::UntrainedTask(task)
            });
        }
        let total: f64 = covering.iter().map(|(_, f)| f).sum();
        Ok(covering.into_iter().map(|(i, f)| (i, f / total)).collect())
    }

    /// Ensemble probabilities on the validation split of `task`.
    pub fn val_probs(&self, tasks: &TaskStream, task: usize) -> Result<Tensor> {
        let weights = self.task_weights(task)?;
        let mut parts = Vec::with_capacity(weights.len());
        for &(m, w) in &weights {
            let probs = match self.outputs(m, task) {
                Some(o) => o.val.clone(),
                None => {
                    let x = Tensor::stack(tasks.get(task)?.val.iter().map(|e| &e.input))?;
                    self.members[m].network.predict_proba(task, &x)?
                }
            };
            parts.push((w, probs));
        }
        combine_weighted(&parts)
    }

    /// Ensemble accuracy on the validation split of `task`.
    pub fn val_accuracy(&self, tasks: &TaskStream, task: usize) -> Result<f64> {
        let probs = self.val_probs(tasks, task)?;
        let labels: Vec<usize> = tasks.get(task)?.val.iter().map(|e| e.label).collect();
        accuracy(&probs, &labels)
    }
}
