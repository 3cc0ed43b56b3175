use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{boosting_weights, episode_beta, select_tasks, MemberOutputs, RunLog, Sampling, ZooConfig, ZooMember, ZooState};
use crate::error::{Error, Result};
use crate::nn::{init_network, HeadSpec, MultiHeadNetwork, NetworkSpec};
use crate::optim::{train_model, BatchSampling, EpochStat, OptimConfig, TrainSource};
use crate::seed::{self, stream};
use crate::tasks::{AugmentConfig, TaskStream};
use crate::tensor::Tensor;

/// Independent seeds for data generation, weight initialization and
/// sampling (mini-batch order, dropout, task selection).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub sampling: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            data: seed,
            init: seed,
            sampling: seed,
        }
    }
}

/// How each member network is built and trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub network: NetworkSpec,
    pub optim: OptimConfig,
    pub augment: AugmentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub selection: Vec<usize>,
    /// Validation accuracy of the ensemble on tasks `0..=episode`.
    pub accuracies: Vec<f64>,
    /// Task weights computed after this episode, if the learner replays data.
    pub boost_weights: Option<Vec<f64>>,
    pub seconds: f64,
    pub losses: Vec<EpochStat>,
}

fn head_specs(tasks: &TaskStream, ids: &[usize]) -> Result<Vec<HeadSpec>> {
    ids.iter()
        .map(|&id| Ok(HeadSpec::new(id, tasks.get(id)?.num_classes)))
        .collect()
}

/// Trains a fresh network on `ids` and returns it with its loss trace.
/// `ids[0]` contributes its full training set; the rest contribute their
/// replay stores.
fn train_member(
    tasks: &TaskStream,
    ids: &[usize],
    learner: &Learner,
    init_seed: u64,
    train_seed: u64,
    sampling: BatchSampling,
) -> Result<(MultiHeadNetwork, Vec<EpochStat>)> {
    let mut net = init_network(&learner.network, &head_specs(tasks, ids)?, init_seed)?;
    let sources = ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| {
            let t = tasks.get(id)?;
            let examples = if pos == 0 { t.train.iter().collect() } else { t.replay_store().collect() };
            Ok(TrainSource {
                task: id,
                examples,
                fill: t.background(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seed::rng(train_seed);
    let trace = train_model(&mut net, &sources, &learner.optim, &learner.augment, sampling, &mut rng)?;
    Ok((net, trace))
}

/// Runs episode `k`: picks the tasks to train, fits a new member on them,
/// adds it to the zoo and refreshes the task weights. `tasks` must already
/// carry the replay stores the learner is allowed to use.
pub fn train_episode(
    zoo: &mut ZooState,
    tasks: &TaskStream,
    k: usize,
    cfg: &ZooConfig,
    learner: &Learner,
    seeds: &Seeds,
) -> Result<EpisodeRecord> {
    cfg.validate()?;
    if k != zoo.seen {
        return Err(Error::InvalidArgument(format!(
            "episode {k} presented after {} tasks",
            zoo.seen
        )));
    }
    tasks.get(k)?;
    let start = Instant::now();

    let beta = episode_beta(cfg, k);
    let weights = match cfg.sampling {
        Sampling::Boosted => zoo.boost_weights.clone(),
        Sampling::Uniform => (0..tasks.len()).map(|i| if i < k { 1.0 / k as f64 } else { 0.0 }).collect(),
    };
    let mut rng = seed::derived_rng(seeds.sampling, &[stream::SELECT, k as u64]);
    let selection = select_tasks(&weights, k, beta, &mut rng)?;

    let sampling = if cfg.replay_fraction < 1.0 && selection.len() > 1 {
        BatchSampling::Stratified
    } else {
        BatchSampling::Pooled
    };
    let (network, losses) = train_member(
        tasks,
        &selection,
        learner,
        seed::derive(seeds.init, &[stream::INIT, k as u64]),
        seed::derive(seeds.sampling, &[stream::TRAIN, k as u64]),
        sampling,
    )?;

    let keep_replay = cfg.replay_fraction > 0.0;
    let mut data_fraction = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    for (pos, &id) in selection.iter().enumerate() {
        let t = tasks.get(id)?;
        data_fraction.insert(id, if pos == 0 { 1.0 } else { t.replay_fraction() });
        let val = network.predict_proba(id, &Tensor::stack(t.val.iter().map(|e| &e.input))?)?;
        let replay = if keep_replay {
            Some(network.predict_proba(id, &Tensor::stack(t.replay_store().map(|e| &e.input))?)?)
        } else {
            None
        };
        outputs.insert(id, MemberOutputs { val, replay });
    }
    zoo.push_with_outputs(
        ZooMember {
            network,
            trained_tasks: selection.clone(),
            data_fraction,
            episode: k,
        },
        outputs,
    );
    zoo.seen = k + 1;

    let boost = if keep_replay {
        let w = boosting_weights(zoo, tasks, zoo.seen)?;
        zoo.boost_weights = w.clone();
        Some(w)
    } else {
        None
    };
    let seconds = start.elapsed().as_secs_f64();
    let accuracies = (0..=k).map(|i| zoo.val_accuracy(tasks, i)).collect::<Result<Vec<_>>>()?;
    Ok(EpisodeRecord {
        episode: k,
        selection,
        accuracies,
        boost_weights: boost,
        seconds,
        losses,
    })
}

/// Presents every task of the stream in order.
pub fn run_continual(tasks: &TaskStream, cfg: &ZooConfig, learner: &Learner, seeds: &Seeds) -> Result<(RunLog, ZooState)> {
    cfg.validate()?;
    let stream_used;
    let tasks = if cfg.replay_fraction > 0.0 && cfg.replay_fraction < 1.0 {
        stream_used = tasks.with_replay_fraction(cfg.replay_fraction, seed::derive(seeds.data, &[stream::REPLAY]))?;
        &stream_used
    } else {
        tasks
    };
    let mut zoo = ZooState::new(tasks.len());
    let mut log = RunLog::new(tasks);
    for k in 0..tasks.len() {
        let rec = train_episode(&mut zoo, tasks, k, cfg, learner, seeds)?;
        log::info!(
            "episode {k}: trained {:?}, mean val acc {:.4}, {:.1}s",
            rec.selection,
            rec.accuracies.iter().sum::<f64>() / rec.accuracies.len() as f64,
            rec.seconds
        );
        log.push(rec);
    }
    Ok((log, zoo))
}

/// One network with a head per task, trained on all tasks jointly. The
/// returned log has a single row holding the final accuracies.
pub fn run_multihead_baseline(tasks: &TaskStream, learner: &Learner, seeds: &Seeds) -> Result<(RunLog, MultiHeadNetwork)> {
    let start = Instant::now();
    let ids: Vec<usize> = (0..tasks.len()).collect();
    let (network, losses) = train_member(
        tasks,
        &ids,
        learner,
        seed::derive(seeds.init, &[stream::INIT, 0]),
        seed::derive(seeds.sampling, &[stream::TRAIN, 0]),
        BatchSampling::Pooled,
    )?;
    let seconds = start.elapsed().as_secs_f64();
    let accuracies = ids
        .iter()
        .map(|&id| {
            let t = tasks.get(id)?;
            let probs = network.predict_proba(id, &Tensor::stack(t.val.iter().map(|e| &e.input))?)?;
            let labels: Vec<usize> = t.val.iter().map(|e| e.label).collect();
            crate::metrics::accuracy(&probs, &labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut log = RunLog::new(tasks);
    log.push(EpisodeRecord {
        episode: tasks.len() - 1,
        selection: ids,
        accuracies,
        boost_weights: None,
        seconds,
        losses,
    });
    Ok((log, network))
}

/// Final per-task validation accuracies of the joint multi-head baseline.
pub fn multihead_accuracies(tasks: &TaskStream, learner: &Learner, seeds: &Seeds) -> Result<Vec<f64>> {
    let (log, _) = run_multihead_baseline(tasks, learner, seeds)?;
    Ok(log.final_row().into_iter().map(|a| a.unwrap_or(f64::NAN)).collect())
}
