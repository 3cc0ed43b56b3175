//! Summary metrics over accuracy matrices, timing, and task competition.

mod competition;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use competition::{incremental_competition, pairwise_competition, CellRun, CompetitionKind, CompetitionMatrix};

use crate::error::{Error, Result};
use crate::tasks::TaskStream;
use crate::tensor::Tensor;
use crate::zoo::{ensemble_predict, RunLog, ZooState};

/// Fraction of rows whose arg-max (first on ties) equals the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset("accuracy of an empty set".into()));
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| {
            let row = probs.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best == y
        })
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn final_row(log: &RunLog) -> Result<Vec<f64>> {
    let row = log.final_row();
    row.iter()
        .enumerate()
        .map(|(t, a)| a.ok_or_else(|| Error::InvalidArgument(format!("task {t} was never evaluated"))))
        .collect()
}

fn debut(log: &RunLog, task: usize) -> Result<usize> {
    log.acc
        .iter()
        .position(|row| row[task].is_some())
        .ok_or_else(|| Error::InvalidArgument(format!("task {task} was never evaluated")))
}

/// Mean accuracy over all tasks after the last episode.
pub fn average_accuracy(log: &RunLog) -> Result<f64> {
    let row = final_row(log)?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// Mean over tasks of the best accuracy reached since the task's debut
/// minus its final accuracy.
pub fn forgetting(log: &RunLog) -> Result<f64> {
    let last = final_row(log)?;
    let mut total = 0.0;
    for (t, fin) in last.iter().enumerate() {
        let best = log.acc[debut(log, t)?..]
            .iter()
            .filter_map(|row| row[t])
            .fold(f64::NEG_INFINITY, f64::max);
        total += best - fin;
    }
    Ok(total / last.len() as f64)
}

/// Mean accuracy of each task right after it was first trained.
pub fn forward_transfer(log: &RunLog) -> Result<f64> {
    let n = log.num_tasks();
    let mut total = 0.0;
    for t in 0..n {
        total += log.acc[debut(log, t)?][t].expect("debut row holds the task");
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub average_accuracy: f64,
    pub forgetting: f64,
    pub forward_transfer: f64,
    pub training_minutes: f64,
    /// Ensemble inference time per example, if measured.
    pub inference_ms_per_example: Option<f64>,
}

impl MetricsReport {
    pub fn from_log(log: &RunLog) -> Result<Self> {
        Ok(Self {
            average_accuracy: average_accuracy(log)?,
            forgetting: forgetting(log)?,
            forward_transfer: forward_transfer(log)?,
            training_minutes: log.total_seconds() / 60.0,
            inference_ms_per_example: None,
        })
    }
}

pub const TIMING_BATCHES: usize = 50;
pub const TIMING_BATCH_SIZE: usize = 16;

/// Wall-clock milliseconds per example for ensemble prediction, measured
/// over 50 batches of 16 validation examples cycling through the tasks.
pub fn inference_ms_per_example(zoo: &ZooState, tasks: &TaskStream) -> Result<f64> {
    if zoo.members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let seen = zoo.seen.min(tasks.len());
    let mut batches = Vec::with_capacity(TIMING_BATCHES);
    for b in 0..TIMING_BATCHES {
        let task = b % seen;
        let val = &tasks.get(task)?.val;
        if val.is_empty() {
            return Err(Error::EmptyDataset(format!("task {task} has no validation examples")));
        }
        let x = Tensor::stack((0..TIMING_BATCH_SIZE).map(|i| &val[(b * TIMING_BATCH_SIZE + i) % val.len()].input))?;
        batches.push((task, x));
    }
    let start = Instant::now();
    for (task, x) in &batches {
        std::hint::black_box(ensemble_predict(zoo, *task, x)?);
    }
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    Ok(ms / (TIMING_BATCHES * TIMING_BATCH_SIZE) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{EpisodeRecord, RunLog};

    fn log_from(rows: &[&[f64]]) -> RunLog {
        let n = rows.last().unwrap().len();
        let mut log = RunLog {
            task_names: (0..n).map(|t| format!("t{t}")).collect(),
            acc: Vec::new(),
            episode_seconds: Vec::new(),
            selections: Vec::new(),
            boost_weights: Vec::new(),
            losses: Vec::new(),
        };
        for (e, row) in rows.iter().enumerate() {
            log.push(EpisodeRecord {
                episode: e,
                selection: vec![e],
                accuracies: row.to_vec(),
                boost_weights: None,
                seconds: 60.0,
                losses: Vec::new(),
            });
        }
        log
    }

    #[test]
    fn summary_metrics() {
        let log = log_from(&[&[0.9], &[0.8, 0.7], &[0.85, 0.6, 0.95]]);
        assert!((average_accuracy(&log).unwrap() - 0.8).abs() < 1e-12);
        // best-minus-final: 0.05, 0.1, 0
        assert!((forgetting(&log).unwrap() - 0.05).abs() < 1e-12);
        assert!((forward_transfer(&log).unwrap() - (0.9 + 0.7 + 0.95) / 3.0).abs() < 1e-12);
        let report = MetricsReport::from_log(&log).unwrap();
        assert!((report.training_minutes - 3.0).abs() < 1e-12);
        assert!(log.to_csv().contains("0,0.9,NaN,NaN\n"));
    }

    #[test]
    fn accuracy_uses_first_max() {
        let p = Tensor::new(vec![3, 2], vec![0.5, 0.5, 0.2, 0.8, 0.9, 0.1]).unwrap();
        assert!((accuracy(&p, &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&p, &[0]).is_err());
    }

    #[test]
    fn timing_needs_members() {
        let zoo = ZooState::new(2);
        let stream = crate::tasks::synthetic_gaussian_tasks(&crate::tasks::SyntheticConfig {
            angles_deg: vec![0.0],
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(inference_ms_per_example(&zoo, &stream), Err(Error::EmptyEnsemble)));
    }
}
