//! Task datasets and task-stream construction.

mod augment;
mod delimited;
mod generators;
pub mod idx;
mod manifest;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use augment::{augment, augment_image, AugmentConfig};
pub use delimited::load_delimited;
pub use idx::{parse_idx, read_idx, IdxArray, IdxType};
pub use generators::{
    class_mean, gaussian_samples, load_idx_corpus, permutation, permute_tasks, rotate_image,
    rotate_tasks, split_tasks, synthetic_gaussian_tasks, Corpus, LabeledData, StreamOptions,
    SyntheticConfig,
};
pub use manifest::{SourceFile, StreamManifest, TaskSummary};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Target statistics of preprocessed inputs.
pub const TARGET_MEAN: f64 = 0.5;
pub const TARGET_STD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub label: usize,
}

impl Example {
    pub fn new(input: Tensor, label: usize) -> Self {
        Self { input, label }
    }
}

/// Scalar affine map taking raw inputs with statistics `(mean, std)` to
/// `TARGET_MEAN + TARGET_STD * (x - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub fn fit<'a>(inputs: impl Iterator<Item = &'a Tensor>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for t in inputs {
            for &v in t.data() {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / n.max(1) as f64;
        let var = (sq / n.max(1) as f64 - mean * mean).max(0.0);
        let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn apply(&self, v: f64) -> f64 {
        TARGET_MEAN + TARGET_STD * (v - self.mean) / self.std
    }

    fn apply_tensor(&self, t: &Tensor) -> Tensor {
        let mut out = t.clone();
        out.data_mut().iter_mut().for_each(|v| *v = self.apply(*v));
        out
    }
}

/// One task: a labelled train/validation split plus the subset of training
/// examples that may be retained for later episodes.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub id: usize,
    pub name: String,
    pub num_classes: usize,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub normalization: Normalization,
    replay: Vec<usize>,
    replay_fraction: f64,
}

impl TaskDataset {
    /// Normalizes raw examples with statistics fitted on the training split.
    /// The replay store starts as the whole training split.
    pub fn from_raw(
        id: usize,
        name: impl Into<String>,
        num_classes: usize,
        train: Vec<Example>,
        val: Vec<Example>,
    ) -> Result<Self> {
        let name = name.into();
        if train.is_empty() {
            return Err(Error::EmptyDataset(format!("task {id} ({name}) has no training examples")));
        }
        let shape = train[0].input.shape().to_vec();
        for ex in train.iter().chain(&val) {
            if ex.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    classes: num_classes,
                });
            }
            if ex.input.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "task {id}: example shape {:?} differs from {shape:?}",
                    ex.input.shape()
                )));
            }
        }
        let normalization = Normalization::fit(train.iter().map(|e| &e.input));
        let norm = |v: Vec<Example>| -> Vec<Example> {
            v.into_iter()
                .map(|e| Example::new(normalization.apply_tensor(&e.input), e.label))
                .collect()
        };
        let train = norm(train);
        let val = norm(val);
        Ok(Self {
            id,
            name,
            num_classes,
            replay: (0..train.len()).collect(),
            replay_fraction: 1.0,
            train,
            val,
            normalization,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        self.train[0].input.shape()
    }

    /// Value that raw zero (image background) maps to after normalization.
    pub fn background(&self) -> f64 {
        self.normalization.apply(0.0)
    }

    pub fn replay_fraction(&self) -> f64 {
        self.replay_fraction
    }

    pub fn replay_indices(&self) -> &[usize] {
        &self.replay
    }

    pub fn replay_store(&self) -> impl ExactSizeIterator<Item = &Example> + '_ {
        self.replay.iter().map(|&i| &self.train[i])
    }

    pub fn replay_examples(&self) -> Vec<Example> {
        self.replay_store().cloned().collect()
    }
}

/// Seeded uniform sample without replacement of `round(fraction * |train|)`
/// training examples (at least one) as the task's replay store.
pub fn subsample_replay(task: &TaskDataset, fraction: f64, seed: u64) -> Result<TaskDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "replay fraction {fraction} outside (0, 1]"
        )));
    }
    let n = task.train.len();
    let count = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut out = task.clone();
    out.replay = if count == n {
        (0..n).collect()
    } else {
        let mut rng = seed::derived_rng(seed, &[seed::stream::REPLAY, task.id as u64]);
        let mut picked = index::sample(&mut rng, n, count).into_vec();
        picked.sort_unstable();
        picked
    };
    out.replay_fraction = fraction;
    Ok(out)
}

/// Where a stream came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub sources: Vec<SourceFile>,
}

/// Tasks in presentation order; task `i` has id `i`.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub tasks: Vec<TaskDataset>,
    pub provenance: Provenance,
}

impl TaskStream {
    pub fn new(tasks: Vec<TaskDataset>, provenance: Provenance) -> Result<Self> {
        if let Some((i, t)) = tasks.iter().enumerate().find(|(i, t)| t.id != *i) {
            return Err(Error::InvalidArgument(format!(
                "task at position {i} has id {}",
                t.id
            )));
        }
        Ok(Self { tasks, provenance })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&TaskDataset> {
        self.tasks
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("stream has no task {id}")))
    }

    /// Applies [`subsample_replay`] to every task.
    pub fn with_replay_fraction(&self, fraction: f64, seed: u64) -> Result<Self> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| subsample_replay(t, fraction, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tasks,
            provenance: self.provenance.clone(),
        })
    }

    /// Sub-stream of the given tasks, renumbered `0..`.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let tasks = ids
            .iter()
            .enumerate()
            .map(|(new_id, &id)| {
                let mut t = self.get(id)?.clone();
                t.id = new_id;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tasks,
            provenance: self.provenance.clone(),
        })
    }

    pub fn manifest(&self) -> StreamManifest {
        StreamManifest::from_stream(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_task(n: usize) -> TaskDataset {
        let train = (0..n)
            .map(|i| Example::new(Tensor::from_vec(vec![i as f64, 1.0]), i % 2))
            .collect();
        TaskDataset::from_raw(0, "toy", 2, train, vec![]).unwrap()
    }

    #[test]
    fn normalization_hits_targets_on_train_split() {
        let t = toy_task(40);
        let vals: Vec<f64> = t.train.iter().flat_map(|e| e.input.data().to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 1e-12);
        assert!((std - 0.25).abs() < 1e-12);
    }

    #[test]
    fn replay_fraction_counts() {
        let t = toy_task(500);
        let full = subsample_replay(&t, 1.0, 3).unwrap();
        assert_eq!(full.replay_indices(), (0..500).collect::<Vec<_>>().as_slice());
        let tenth = subsample_replay(&t, 0.1, 3).unwrap();
        assert_eq!(tenth.replay_store().len(), 50);
        assert_eq!(tenth.replay_fraction(), 0.1);
        let again = subsample_replay(&t, 0.1, 3).unwrap();
        assert_eq!(tenth.replay_indices(), again.replay_indices());
        let other = subsample_replay(&t, 0.1, 4).unwrap();
        assert_ne!(tenth.replay_indices(), other.replay_indices());
        assert!(tenth.replay_indices().iter().all(|&i| i < 500));
    }

    #[test]
    fn replay_fraction_out_of_range() {
        let t = toy_task(10);
        for f in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(subsample_replay(&t, f, 0).is_err());
        }
    }

    #[test]
    fn labels_are_validated() {
        let train = vec![Example::new(Tensor::from_vec(vec![0.0]), 3)];
        assert!(matches!(
            TaskDataset::from_raw(0, "bad", 2, train, vec![]),
            Err(Error::LabelOutOfRange { label: 3, classes: 2 })
        ));
    }
}
