use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::tasks::TaskStream;
use crate::zoo::{multihead_accuracies, Learner, Seeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitionKind {
    /// `values[i][j]`: change in task `i` accuracy, in percentage points,
    /// when trained jointly with task `j` instead of alone.
    Pairwise,
    /// `values[k][i]`: accuracy (percent) of task `i` in a model trained on
    /// tasks `0..=k`; lower triangular.
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionMatrix {
    pub kind: CompetitionKind,
    pub task_names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Accuracy (percent) of each task trained alone.
    pub isolated: Vec<f64>,
    /// Every training run behind the matrix.
    pub runs: Vec<CellRun>,
}

/// One multi-head training run of a competition experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub trained_tasks: Vec<usize>,
    pub seeds: Seeds,
    /// Validation accuracy of each trained task, in `trained_tasks` order.
    pub accuracies: Vec<f64>,
}

impl CompetitionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for t in 0..self.task_names.len() {
            write!(out, ",task_{t}").unwrap();
        }
        out.push('\n');
        for (r, row) in self.values.iter().enumerate() {
            write!(out, "{r}").unwrap();
            for v in row {
                match v {
                    Some(x) => write!(out, ",{x}").unwrap(),
                    None => out.push_str(",NaN"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn cell_seeds(base: &Seeds, path: &[u64]) -> Seeds {
    let mut full = vec![stream::CELL];
    full.extend_from_slice(path);
    Seeds {
        data: base.data,
        init: seed::derive(base.init, &full),
        sampling: seed::derive(base.sampling, &full),
    }
}

fn run_cells<T, F>(cells: Vec<T>, threads: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    T: Send + Sync,
    F: Fn(&T) -> Result<Vec<f64>> + Send + Sync,
{
    if threads <= 1 {
        return cells.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(&f).collect())
}

/// Trains every task alone and every ordered pair `(i, j)` jointly (`n^2`
/// runs) with the multi-head learner; each run has its own derived seed.
pub fn pairwise_competition(tasks: &TaskStream, learner: &Learner, seeds: &Seeds, threads: usize) -> Result<CompetitionMatrix> {
    let n = tasks.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let pair_ids = |i: usize, j: usize| if i == j { vec![i] } else { vec![i, j] };
    let accs = run_cells(cells.clone(), threads, |&(i, j)| {
        let sub = tasks.subset(&pair_ids(i, j))?;
        multihead_accuracies(&sub, learner, &cell_seeds(seeds, &[i as u64, j as u64]))
    })?;
    let runs = cells
        .iter()
        .zip(&accs)
        .map(|(&(i, j), a)| CellRun {
            trained_tasks: pair_ids(i, j),
            seeds: cell_seeds(seeds, &[i as u64, j as u64]),
            accuracies: a.clone(),
        })
        .collect();
    let isolated: Vec<f64> = (0..n).map(|i| 100.0 * accs[i * n + i][0]).collect();
    let mut values = vec![vec![None; n]; n];
    for (c, &(i, j)) in cells.iter().enumerate() {
        values[i][j] = Some(100.0 * accs[c][0] - isolated[i]);
    }
    Ok(CompetitionMatrix {
        kind: CompetitionKind::Pairwise,
        task_names: tasks.tasks.iter().map(|t| t.name.clone()).collect(),
        values,
        isolated,
        runs,
    })
}

/// Trains on the first `k + 1` tasks for every `k`.
pub fn incremental_competition(tasks: &TaskStream, learner: &Learner, seeds: &Seeds, threads: usize) -> Result<CompetitionMatrix> {
    let n = tasks.len();
    let accs = run_cells((0..n).collect(), threads, |&k| {
        let ids: Vec<usize> = (0..=k).collect();
        multihead_accuracies(&tasks.subset(&ids)?, learner, &cell_seeds(seeds, &[k as u64]))
    })?;
    let runs = accs
        .iter()
        .enumerate()
        .map(|(k, a)| CellRun {
            trained_tasks: (0..=k).collect(),
            seeds: cell_seeds(seeds, &[k as u64]),
            accuracies: a.clone(),
        })
        .collect();
    let mut values = vec![vec![None; n]; n];
    for (k, row) in accs.iter().enumerate() {
        for (i, a) in row.iter().enumerate() {
            values[k][i] = Some(100.0 * a);
        }
    }
    Ok(CompetitionMatrix {
        kind: CompetitionKind::Incremental,
        task_names: tasks.tasks.iter().map(|t| t.name.clone()).collect(),
        isolated: vec![100.0 * accs[0][0]],
        values,
        runs,
    })
}
