use rand::seq::SliceRandom;
use rand::RngCore;

use super::{cosine_lr, step_network, OptimConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_scaled, HeadGrad, Mode, MultiHeadNetwork};
use crate::seed::Rng;
use crate::tasks::{augment_image, AugmentConfig, Example};
use crate::tensor::Tensor;

/// Training examples for one head.
#[derive(Debug, Clone)]
pub struct TrainSource<'a> {
    pub task: usize,
    pub examples: Vec<&'a Example>,
    /// Padding value used by crop augmentation.
    pub fill: f64,
}

/// How mini-batches are drawn from several sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSampling {
    /// Uniform over the pooled examples; one epoch is one pass over the pool.
    Pooled,
    /// Every batch holds the same number of examples from each source; one
    /// epoch is one pass over the largest source, smaller ones are cycled.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

type Item = (usize, usize); // (source, example)

fn epoch_batches(sources: &[TrainSource<'_>], batch_size: usize, sampling: BatchSampling, rng: &mut Rng, cursors: &mut [(Vec<usize>, usize)]) -> Vec<Vec<Item>> {
    match sampling {
        BatchSampling::Pooled => {
            let mut pool: Vec<Item> = sources
                .iter()
                .enumerate()
                .flat_map(|(s, src)| (0..src.examples.len()).map(move |e| (s, e)))
                .collect();
            pool.shuffle(rng);
            pool.chunks(batch_size).map(<[Item]>::to_vec).collect()
        }
        BatchSampling::Stratified => {
            let per = (batch_size / sources.len()).max(1);
            let largest = sources.iter().map(|s| s.examples.len()).max().unwrap_or(0);
            let n_batches = largest.div_ceil(per);
            let mut batches = Vec::with_capacity(n_batches);
            for _ in 0..n_batches {
                let mut batch = Vec::with_capacity(per * sources.len());
                for (s, (order, pos)) in cursors.iter_mut().enumerate() {
                    for _ in 0..per {
                        if *pos == order.len() {
                            order.shuffle(rng);
                            *pos = 0;
                        }
                        batch.push((s, order[*pos]));
                        *pos += 1;
                    }
                }
                batches.push(batch);
            }
            batches
        }
    }
}

/// Trains `net` on the given sources for `cfg.epochs` epochs with a
/// per-epoch cosine learning rate. Each mini-batch runs the shared trunk once
/// and dispatches rows to their task heads; the batch loss is the mean
/// per-example cross-entropy. Returns the example-weighted mean loss per epoch.
pub fn train_model(
    net: &mut MultiHeadNetwork,
    sources: &[TrainSource<'_>],
    cfg: &OptimConfig,
    augment: &AugmentConfig,
    sampling: BatchSampling,
    rng: &mut Rng,
) -> Result<Vec<EpochStat>> {
    cfg.validate()?;
    let total: usize = sources.iter().map(|s| s.examples.len()).sum();
    if total == 0 {
        return Err(Error::EmptyDataset("no training examples in the pooled sources".into()));
    }
    if sampling == BatchSampling::Stratified && sources.iter().any(|s| s.examples.is_empty()) {
        return Err(Error::EmptyDataset("stratified batches need examples from every source".into()));
    }
    for s in sources {
        net.classes(s.task)?;
        for e in &s.examples {
            if e.input.shape() != net.spec().input_shape.as_slice() {
                return Err(Error::Shape(format!(
                    "example shape {:?} does not match network input {:?}",
                    e.input.shape(),
                    net.spec().input_shape
                )));
            }
        }
    }
    let use_augment = augment.enabled();
    if use_augment && net.spec().input_shape.len() != 3 {
        return Err(Error::InvalidArgument("augmentation requires image inputs".into()));
    }

    let mut state = OptimizerState::for_network(net);
    let mut cursors: Vec<(Vec<usize>, usize)> = sources
        .iter()
        .map(|s| ((0..s.examples.len()).collect(), s.examples.len()))
        .collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
        let batches = epoch_batches(sources, cfg.batch_size, sampling, rng, &mut cursors);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in batches {
            let mut inputs = Vec::with_capacity(batch.len());
            for &(s, e) in &batch {
                let ex = sources[s].examples[e];
                if use_augment {
                    let pad = if augment.random_crop { augment.pad } else { 0 };
                    let offset = if augment.random_crop {
                        (
                            (rng.next_u32() as usize) % (2 * pad + 1),
                            (rng.next_u32() as usize) % (2 * pad + 1),
                        )
                    } else {
                        (0, 0)
                    };
                    let flip = augment.hflip && rng.next_u32() & 1 == 1;
                    inputs.push(augment_image(&ex.input, pad, offset, flip, sources[s].fill)?);
                } else {
                    inputs.push(ex.input.clone());
                }
            }
            let x = Tensor::stack(&inputs)?;
            let n = batch.len();
            let (features, cache) = net.forward_features(&x, Mode::Train { dropout_seed: rng.next_u64() })?;

            let mut groups: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new(); // (task, rows, labels)
            for (row, &(s, e)) in batch.iter().enumerate() {
                let task = sources[s].task;
                let label = sources[s].examples[e].label;
                match groups.iter_mut().find(|g| g.0 == task) {
                    Some(g) => {
                        g.1.push(row);
                        g.2.push(label);
                    }
                    None => groups.push((task, vec![row], vec![label])),
                }
            }
            let mut dlogits = Vec::with_capacity(groups.len());
            let mut batch_loss = 0.0;
            for (task, rows, labels) in &groups {
                let logits = net.head_logits(*task, &features.select_rows(rows))?;
                let (loss, d) = cross_entropy_scaled(&logits, labels, n as f64)?;
                batch_loss += loss;
                dlogits.push(d);
            }
            let head_grads: Vec<HeadGrad<'_>> = groups
                .iter()
                .zip(&dlogits)
                .map(|((task, rows, _), d)| HeadGrad {
                    task: *task,
                    rows,
                    dlogits: d,
                })
                .collect();
            let grads = net.backward_heads(&cache, &head_grads)?;
            net.update_running_stats(&cache)?;
            step_network(net, &grads, &mut state, lr, cfg)?;
            loss_sum += batch_loss * n as f64;
            seen += n;
        }
        let mean_loss = loss_sum / seen as f64;
        if !mean_loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        trace.push(EpochStat { epoch, mean_loss, lr });
    }
    Ok(trace)
}
