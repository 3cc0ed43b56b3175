use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EpisodeRecord;
use crate::optim::EpochStat;
use crate::tasks::TaskStream;

/// Everything recorded while presenting a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub task_names: Vec<String>,
    /// `acc[e][t]`: validation accuracy on task `t` after episode `e`,
    /// `None` for tasks not yet presented.
    pub acc: Vec<Vec<Option<f64>>>,
    pub episode_seconds: Vec<f64>,
    pub selections: Vec<Vec<usize>>,
    pub boost_weights: Vec<Option<Vec<f64>>>,
    pub losses: Vec<Vec<EpochStat>>,
}

impl RunLog {
    pub fn new(tasks: &TaskStream) -> Self {
        Self {
            task_names: tasks.tasks.iter().map(|t| t.name.clone()).collect(),
            acc: Vec::new(),
            episode_seconds: Vec::new(),
            selections: Vec::new(),
            boost_weights: Vec::new(),
            losses: Vec::new(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn episodes(&self) -> usize {
        self.acc.len()
    }

    pub fn push(&mut self, rec: EpisodeRecord) {
        let mut row = vec![None; self.num_tasks()];
        let offset = rec.episode + 1 - rec.accuracies.len();
        for (i, a) in rec.accuracies.iter().enumerate() {
            row[offset + i] = Some(*a);
        }
        self.acc.push(row);
        self.episode_seconds.push(rec.seconds);
        self.selections.push(rec.selection);
        self.boost_weights.push(rec.boost_weights);
        self.losses.push(rec.losses);
    }

    pub fn final_row(&self) -> Vec<Option<f64>> {
        self.acc.last().cloned().unwrap_or_else(|| vec![None; self.num_tasks()])
    }

    pub fn total_seconds(&self) -> f64 {
        self.episode_seconds.iter().sum()
    }

    /// Accuracy matrix as CSV, one row per episode, `NaN` for unseen tasks.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode");
        for t in 0..self.num_tasks() {
            write!(out, ",task_{t}").unwrap();
        }
        out.push('\n');
        for (e, row) in self.acc.iter().enumerate() {
            write!(out, "{e}").unwrap();
            for v in row {
                match v {
                    Some(a) => write!(out, ",{a}").unwrap(),
                    None => out.push_str(",NaN"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Per-epoch training loss of every episode.
    pub fn losses_csv(&self) -> String {
        let mut out = String::from("episode,epoch,mean_loss,lr\n");
        for (e, trace) in self.losses.iter().enumerate() {
            for s in trace {
                writeln!(out, "{e},{},{},{}", s.epoch, s.mean_loss, s.lr).unwrap();
            }
        }
        out
    }
}
