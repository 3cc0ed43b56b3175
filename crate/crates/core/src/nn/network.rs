use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvGeom};
use super::loss::softmax_rows;
use super::spec::{HeadSpec, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

fn next_instance() -> u64 {
    NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed)
}

/// Running-average momentum of batch-norm statistics (weight on the old value).
pub const BN_MOMENTUM: f64 = 0.9;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Batch statistics, dropout active with masks drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
    /// Running statistics, dropout is the identity.
    Eval,
    /// Batch statistics, dropout is the identity. The loss is then a pure
    /// function of parameters and batch, which is what gradient checking needs.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub(crate) enum LayerParams {
    None,
    Conv {
        weight: Tensor,
        bias: Tensor,
    },
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
    },
    Dense {
        weight: Tensor,
        bias: Tensor,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    /// `[classes, features]`
    pub weight: Tensor,
    /// `[classes]`
    pub bias: Tensor,
}

impl Head {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }
}

/// Name, shape and weight-decay eligibility of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
}

/// One gradient tensor per parameter tensor, in [`MultiHeadNetwork::param_info`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    None,
    Conv { cols: Vec<f64> },
    Pool { argmax: Vec<u32> },
    Mask { mask: Vec<f64> },
    Relu { active: Vec<bool> },
    Bn {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    },
    Dense { input: Vec<f64> },
}

/// Intermediate activations from one forward pass; valid only for the
/// network state that produced it.
#[derive(Debug, Clone)]
pub struct BatchCache {
    instance: u64,
    version: u64,
    rows: usize,
    layers: Vec<LayerCache>,
    features: Tensor,
    task: Option<usize>,
}

impl BatchCache {
    pub fn features(&self) -> &Tensor {
        &self.features
    }
}

/// Gradient of the loss w.r.t. one head's logits for a subset of batch rows.
pub struct HeadGrad<'a> {
    pub task: usize,
    pub rows: &'a [usize],
    pub dlogits: &'a Tensor,
}

/// Shared trunk plus one linear classifier per task.
#[derive(Debug, Clone)]
pub struct MultiHeadNetwork {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    layers: Vec<LayerParams>,
    heads: BTreeMap<usize, Head>,
    instance: u64,
    version: u64,
}

fn kaiming(shape: &[usize], fan_in: usize, rng: &mut seed::Rng) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Builds a network with Kaiming-normal weights, zero biases, unit batch-norm
/// scale and zero batch-norm shift. Deterministic in `seed`.
pub fn init_network(spec: &NetworkSpec, heads: &[HeadSpec], seed: u64) -> Result<MultiHeadNetwork> {
    if heads.is_empty() {
        return Err(Error::InvalidArgument("network needs at least one head".into()));
    }
    let shapes = spec.shapes()?;
    let mut rng = seed::derived_rng(seed, &[seed::stream::INIT]);
    let mut layers = Vec::with_capacity(spec.trunk.len());
    for (i, layer) in spec.trunk.iter().enumerate() {
        let input = &shapes[i];
        let params = match *layer {
            LayerSpec::Conv2d {
                kernel, filters, ..
            } => {
                let fan_in = input[0] * kernel * kernel;
                LayerParams::Conv {
                    weight: kaiming(&[filters, input[0], kernel, kernel], fan_in, &mut rng),
                    bias: Tensor::zeros(&[filters]),
                }
            }
            LayerSpec::BatchNorm => {
                let c = input[0];
                LayerParams::BatchNorm {
                    gamma: Tensor::full(&[c], 1.0),
                    beta: Tensor::zeros(&[c]),
                    running_mean: Tensor::zeros(&[c]),
                    running_var: Tensor::full(&[c], 1.0),
                }
            }
            LayerSpec::Dense { units } => LayerParams::Dense {
                weight: kaiming(&[units, input[0]], input[0], &mut rng),
                bias: Tensor::zeros(&[units]),
            },
            _ => LayerParams::None,
        };
        layers.push(params);
    }
    let features = shapes.last().unwrap()[0];
    let mut sorted = heads.to_vec();
    sorted.sort_by_key(|h| h.task);
    let mut head_map = BTreeMap::new();
    for h in sorted {
        if h.classes == 0 {
            return Err(Error::InvalidArgument(format!("task {} has zero classes", h.task)));
        }
        let head = Head {
            weight: kaiming(&[h.classes, features], features, &mut rng),
            bias: Tensor::zeros(&[h.classes]),
        };
        if head_map.insert(h.task, head).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate head for task {}", h.task)));
        }
    }
    Ok(MultiHeadNetwork {
        spec: spec.clone(),
        shapes,
        layers,
        heads: head_map,
        instance: next_instance(),
        version: 0,
    })
}

impl MultiHeadNetwork {
    pub(crate) fn from_parts(
        spec: NetworkSpec,
        layers: Vec<LayerParams>,
        heads: BTreeMap<usize, Head>,
    ) -> Result<Self> {
        let shapes = spec.shapes()?;
        if layers.len() != spec.trunk.len() {
            return Err(Error::Shape("layer parameter count differs from spec".into()));
        }
        let net = Self {
            spec,
            shapes,
            layers,
            heads,
            instance: next_instance(),
            version: 0,
        };
        let expect = init_network(
            &net.spec,
            &net.heads
                .iter()
                .map(|(&t, h)| HeadSpec::new(t, h.classes()))
                .collect::<Vec<_>>(),
            0,
        )?;
        for (a, b) in net.param_info().iter().zip(expect.param_info()) {
            if a.shape != b.shape || a.name != b.name {
                return Err(Error::Shape(format!("parameter {} has shape {:?}", a.name, a.shape)));
            }
        }
        Ok(net)
    }

    pub(crate) fn layer_params(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn heads(&self) -> &BTreeMap<usize, Head> {
        &self.heads
    }

    pub fn tasks(&self) -> impl Iterator<Item = usize> + '_ {
        self.heads.keys().copied()
    }

    pub fn has_head(&self, task: usize) -> bool {
        self.heads.contains_key(&task)
    }

    pub fn classes(&self, task: usize) -> Result<usize> {
        self.head(task).map(Head::classes)
    }

    fn head(&self, task: usize) -> Result<&Head> {
        self.heads.get(&task).ok_or(Error::MissingHead(task))
    }

    pub fn feature_dim(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn num_params(&self) -> usize {
        self.param_info()
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum()
    }

    /// Parameter tensors in canonical order: trunk layers front to back, then
    /// heads by ascending task id. Batch-norm parameters and head biases are
    /// exempt from weight decay.
    pub fn param_info(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                LayerParams::None => {}
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    out.push(ParamInfo {
                        name: format!("trunk.{i}.weight"),
                        shape: weight.shape().to_vec(),
                        decay: true,
                    });
                    out.push(ParamInfo {
                        name: format!("trunk.{i}.bias"),
                        shape: bias.shape().to_vec(),
                        decay: true,
                    });
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(ParamInfo {
                        name: format!("trunk.{i}.gamma"),
                        shape: gamma.shape().to_vec(),
                        decay: false,
                    });
                    out.push(ParamInfo {
                        name: format!("trunk.{i}.beta"),
                        shape: beta.shape().to_vec(),
                        decay: false,
                    });
                }
            }
        }
        for (t, h) in &self.heads {
            out.push(ParamInfo {
                name: format!("head.{t}.weight"),
                shape: h.weight.shape().to_vec(),
                decay: true,
            });
            out.push(ParamInfo {
                name: format!("head.{t}.bias"),
                shape: h.bias.shape().to_vec(),
                decay: false,
            });
        }
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerParams::None => {}
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
            }
        }
        for h in self.heads.values() {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    /// Mutable parameters in canonical order. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.version += 1;
        let mut out = Vec::new();
        for l in self.layers.iter_mut() {
            match l {
                LayerParams::None => {}
                LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
            }
        }
        for h in self.heads.values_mut() {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self
                .param_info()
                .iter()
                .map(|p| Tensor::zeros(&p.shape))
                .collect(),
        }
    }

    fn conv_geom(&self, i: usize) -> ConvGeom {
        let (input, output) = (&self.shapes[i], &self.shapes[i + 1]);
        let LayerSpec::Conv2d { kernel, stride, .. } = self.spec.trunk[i] else {
            unreachable!("conv_geom on non-conv layer")
        };
        ConvGeom {
            channels: input[0],
            height: input[1],
            width: input[2],
            filters: output[0],
            kernel,
            stride,
            pad: kernel / 2,
            out_h: output[1],
            out_w: output[2],
        }
    }

    fn bn_layout(&self, i: usize) -> (usize, usize) {
        let s = &self.shapes[i];
        (s[0], s[1..].iter().product())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        if batch.shape().len() != self.spec.input_shape.len() + 1
            || batch.shape()[1..] != self.spec.input_shape[..]
        {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match network input {:?}",
                batch.shape(),
                self.spec.input_shape
            )));
        }
        Ok(batch.rows())
    }

    fn run_trunk(&self, batch: &Tensor, mode: Mode, keep: bool) -> Result<(Tensor, Vec<LayerCache>)> {
        let n = self.check_batch(batch)?;
        let mut x = batch.data().to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.spec.trunk.iter().enumerate() {
            let (y, cache) = match (*layer, &self.layers[i]) {
                (LayerSpec::Conv2d { .. }, LayerParams::Conv { weight, bias }) => {
                    let g = self.conv_geom(i);
                    let (y, cols) =
                        layers::conv_forward(&g, weight.data(), bias.data(), &x, n, keep);
                    (y, cols.map_or(LayerCache::None, |cols| LayerCache::Conv { cols }))
                }
                (LayerSpec::MaxPool2d { window }, _) => {
                    let s = &self.shapes[i];
                    let (y, argmax) = layers::maxpool_forward(&x, n, (s[0], s[1], s[2]), window);
                    (y, LayerCache::Pool { argmax })
                }
                (LayerSpec::Relu, _) => {
                    let active: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
                    x.iter_mut().for_each(|v| *v = v.max(0.0));
                    (x, LayerCache::Relu { active })
                }
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let (c, s) = self.bn_layout(i);
                    let running = matches!(mode, Mode::Eval)
                        .then(|| (running_mean.data(), running_var.data()));
                    let out = layers::bn_forward(&x, n, c, s, gamma.data(), beta.data(), running);
                    (
                        out.y,
                        LayerCache::Bn {
                            xhat: out.xhat,
                            inv_std: out.inv_std,
                            batch_stats: out.batch_stats,
                        },
                    )
                }
                (LayerSpec::Dropout { p }, _) => match mode {
                    Mode::Train { dropout_seed } if p > 0.0 => {
                        let mut rng = seed::derived_rng(dropout_seed, &[i as u64]);
                        let scale = 1.0 / (1.0 - p);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
                            .collect();
                        x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        (x, LayerCache::Mask { mask })
                    }
                    _ => (x, LayerCache::None),
                },
                (LayerSpec::Flatten, _) => (x, LayerCache::None),
                (LayerSpec::Dense { units }, LayerParams::Dense { weight, bias }) => {
                    let inputs = self.shapes[i][0];
                    let y = layers::dense_forward(weight.data(), bias.data(), &x, n, inputs, units);
                    (y, LayerCache::Dense { input: x })
                }
                _ => unreachable!("layer parameters out of sync with spec"),
            };
            caches.push(if keep { cache } else { LayerCache::None });
            x = y;
        }
        let mut shape = vec![n];
        shape.extend(self.shapes.last().unwrap());
        Ok((Tensor::new(shape, x)?, caches))
    }

    /// Trunk features for a batch, with the cache needed by [`Self::backward_heads`].
    pub fn forward_features(&self, batch: &Tensor, mode: Mode) -> Result<(Tensor, BatchCache)> {
        let (features, layers) = self.run_trunk(batch, mode, true)?;
        Ok((
            features.clone(),
            BatchCache {
                instance: self.instance,
                version: self.version,
                rows: features.rows(),
                layers,
                features,
                task: None,
            },
        ))
    }

    /// Applies a task head to trunk features.
    pub fn head_logits(&self, task: usize, features: &Tensor) -> Result<Tensor> {
        let head = self.head(task)?;
        let (n, f) = (features.rows(), features.row_len());
        if f != self.feature_dim() {
            return Err(Error::Shape(format!("features have width {f}, expected {}", self.feature_dim())));
        }
        let classes = head.classes();
        let y = layers::dense_forward(head.weight.data(), head.bias.data(), features.data(), n, f, classes);
        Tensor::new(vec![n, classes], y)
    }

    /// Logits for `task` on `batch`, plus the cache for [`Self::backward`].
    pub fn forward(&self, task: usize, batch: &Tensor, mode: Mode) -> Result<(Tensor, BatchCache)> {
        self.head(task)?;
        let (features, mut cache) = self.forward_features(batch, mode)?;
        cache.task = Some(task);
        Ok((self.head_logits(task, &features)?, cache))
    }

    /// Eval-mode logits without keeping a cache.
    pub fn logits(&self, task: usize, batch: &Tensor) -> Result<Tensor> {
        self.head(task)?;
        let n = self.check_batch(batch)?;
        let mut out = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let chunk = if start == 0 && end == n { batch.clone() } else { batch.select_rows(&idx) };
            let (features, _) = self.run_trunk(&chunk, Mode::Eval, false)?;
            out.extend_from_slice(self.head_logits(task, &features)?.data());
            start = end;
        }
        let classes = self.classes(task)?;
        Tensor::new(vec![n, classes], out)
    }

    /// Class probabilities in eval mode: softmax of the task head's logits.
    pub fn predict_proba(&self, task: usize, batch: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(task, batch)?))
    }

    /// Gradients of the loss whose derivative w.r.t. `task`'s logits is `dlogits`.
    pub fn backward(&self, cache: &BatchCache, dlogits: &Tensor, task: usize) -> Result<Gradients> {
        match cache.task {
            Some(t) if t == task => {}
            Some(t) => {
                return Err(Error::StaleCache(format!(
                    "cache was produced for task {t}, backward called for task {task}"
                )))
            }
            None => {}
        }
        let rows: Vec<usize> = (0..cache.rows).collect();
        self.backward_heads(
            cache,
            &[HeadGrad {
                task,
                rows: &rows,
                dlogits,
            }],
        )
    }

    /// Backpropagates several heads' logit gradients, each over its own rows of
    /// the batch, through the shared trunk.
    pub fn backward_heads(&self, cache: &BatchCache, groups: &[HeadGrad<'_>]) -> Result<Gradients> {
        if cache.instance != self.instance || cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "cache from network {}#{} used with network {}#{}",
                cache.instance, cache.version, self.instance, self.version
            )));
        }
        if cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("cache has no layer activations".into()));
        }
        let n = cache.rows;
        let f = self.feature_dim();
        let info = self.param_info();
        let mut grads = self.zero_gradients();
        let head_offset: BTreeMap<usize, usize> = info
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let rest = p.name.strip_prefix("head.")?;
                let task = rest.strip_suffix(".weight")?.parse().ok()?;
                Some((task, i))
            })
            .collect();

        let mut dfeat = vec![0.0; n * f];
        for g in groups {
            let head = self.head(g.task)?;
            let classes = head.classes();
            if g.dlogits.shape() != [g.rows.len(), classes] {
                return Err(Error::Shape(format!(
                    "dlogits {:?} for task {} expected [{}, {classes}]",
                    g.dlogits.shape(),
                    g.task,
                    g.rows.len()
                )));
            }
            if g.rows.iter().any(|&r| r >= n) {
                return Err(Error::Shape("head gradient row outside batch".into()));
            }
            let feats = cache.features.select_rows(g.rows);
            let off = head_offset[&g.task];
            let (dw, rest) = grads.tensors[off..].split_at_mut(1);
            let dx = layers::dense_backward(
                head.weight.data(),
                feats.data(),
                g.dlogits.data(),
                g.rows.len(),
                f,
                classes,
                dw[0].data_mut(),
                rest[0].data_mut(),
                true,
            )
            .expect("dx requested");
            for (k, &r) in g.rows.iter().enumerate() {
                for (d, s) in dfeat[r * f..(r + 1) * f].iter_mut().zip(&dx[k * f..(k + 1) * f]) {
                    *d += s;
                }
            }
        }

        // offsets of each trunk layer's parameters
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut next = 0;
        for l in &self.layers {
            offsets.push(next);
            if !matches!(l, LayerParams::None) {
                next += 2;
            }
        }

        let mut dy = dfeat;
        for i in (0..self.layers.len()).rev() {
            let need_dx = i > 0;
            let cache_i = &cache.layers[i];
            let dx = match (&self.spec.trunk[i], &self.layers[i], cache_i) {
                (LayerSpec::Conv2d { .. }, LayerParams::Conv { weight, .. }, LayerCache::Conv { cols }) => {
                    let g = self.conv_geom(i);
                    let (dw, rest) = grads.tensors[offsets[i]..].split_at_mut(1);
                    layers::conv_backward(
                        &g,
                        weight.data(),
                        cols,
                        &dy,
                        n,
                        dw[0].data_mut(),
                        rest[0].data_mut(),
                        need_dx,
                    )
                }
                (LayerSpec::MaxPool2d { .. }, _, LayerCache::Pool { argmax }) => {
                    let in_len = self.shapes[i].iter().product();
                    Some(layers::maxpool_backward(&dy, argmax, n, in_len))
                }
                (LayerSpec::Relu, _, LayerCache::Relu { active }) => {
                    dy.iter_mut().zip(active).for_each(|(d, &a)| {
                        if !a {
                            *d = 0.0
                        }
                    });
                    Some(dy)
                }
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm { gamma, .. },
                    LayerCache::Bn {
                        xhat,
                        inv_std,
                        batch_stats,
                    },
                ) => {
                    let (c, s) = self.bn_layout(i);
                    let (dg, rest) = grads.tensors[offsets[i]..].split_at_mut(1);
                    Some(layers::bn_backward(
                        &dy,
                        xhat,
                        inv_std,
                        gamma.data(),
                        n,
                        c,
                        s,
                        batch_stats.is_some(),
                        dg[0].data_mut(),
                        rest[0].data_mut(),
                    ))
                }
                (LayerSpec::Dropout { .. }, _, LayerCache::Mask { mask }) => {
                    dy.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                    Some(dy)
                }
                (LayerSpec::Dropout { .. } | LayerSpec::Flatten, _, LayerCache::None) => Some(dy),
                (LayerSpec::Dense { units }, LayerParams::Dense { weight, .. }, LayerCache::Dense { input }) => {
                    let inputs = self.shapes[i][0];
                    let (dw, rest) = grads.tensors[offsets[i]..].split_at_mut(1);
                    layers::dense_backward(
                        weight.data(),
                        input,
                        &dy,
                        n,
                        inputs,
                        *units,
                        dw[0].data_mut(),
                        rest[0].data_mut(),
                        need_dx,
                    )
                }
                _ => return Err(Error::StaleCache(format!("missing activations for layer {i}"))),
            };
            match dx {
                Some(d) => dy = d,
                None => break,
            }
        }
        Ok(grads)
    }

    /// Folds the batch statistics recorded in `cache` into the running averages.
    pub fn update_running_stats(&mut self, cache: &BatchCache) -> Result<()> {
        if cache.instance != self.instance || cache.version != self.version {
            return Err(Error::StaleCache("running-stat update from a stale cache".into()));
        }
        let m_per_channel: Vec<usize> = (0..self.layers.len())
            .map(|i| cache.rows * self.shapes[i][1..].iter().product::<usize>())
            .collect();
        for (i, (layer, c)) in self.layers.iter_mut().zip(&cache.layers).enumerate() {
            if let (
                LayerParams::BatchNorm {
                    running_mean,
                    running_var,
                    ..
                },
                LayerCache::Bn {
                    batch_stats: Some((mean, var)),
                    ..
                },
            ) = (layer, c)
            {
                let m = m_per_channel[i] as f64;
                let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                for (r, b) in running_mean.data_mut().iter_mut().zip(mean) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
                }
                for (r, b) in running_var.data_mut().iter_mut().zip(var) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b * unbias;
                }
            }
        }
        self.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::softmax_cross_entropy;

    fn dense_spec() -> NetworkSpec {
        NetworkSpec::mlp(4, &[5], 0.0)
    }

    #[test]
    fn head_and_bn_init_rules() {
        let spec = NetworkSpec {
            input_shape: vec![3],
            trunk: vec![LayerSpec::Dense { units: 4 }, LayerSpec::BatchNorm],
        };
        let net = init_network(&spec, &[HeadSpec::new(0, 3)], 11).unwrap();
        assert_eq!(net.heads()[&0].bias.data(), &[0.0, 0.0, 0.0]);
        let p = net.params();
        assert_eq!(p[2].data(), &[1.0; 4]); // gamma
        assert_eq!(p[3].data(), &[0.0; 4]); // beta
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let spec = NetworkSpec::small_cnn([1, 8, 8], 3, 0.2);
        let heads = [HeadSpec::new(0, 2), HeadSpec::new(4, 5)];
        let a = init_network(&spec, &heads, 5).unwrap();
        let b = init_network(&spec, &heads, 5).unwrap();
        let c = init_network(&spec, &heads, 6).unwrap();
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.data(), y.data());
        }
        assert_ne!(a.params()[0].data(), c.params()[0].data());
    }

    #[test]
    fn kaiming_std_for_fan_in_eight() {
        let spec = NetworkSpec {
            input_shape: vec![8],
            trunk: vec![LayerSpec::Dense { units: 1250 }],
        };
        let net = init_network(&spec, &[HeadSpec::new(0, 2)], 3).unwrap();
        let w = net.params()[0].data();
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        assert!((std - 0.5).abs() < 0.1, "std {std}");
    }

    #[test]
    fn missing_head_is_an_error() {
        let net = init_network(&dense_spec(), &[HeadSpec::new(1, 2)], 0).unwrap();
        let x = Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap();
        assert!(matches!(net.forward(0, &x, Mode::Eval), Err(Error::MissingHead(0))));
        assert!(matches!(net.predict_proba(7, &x), Err(Error::MissingHead(7))));
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut net = init_network(&dense_spec(), &[HeadSpec::new(0, 3)], 0).unwrap();
        for p in net.params_mut() {
            p.data_mut().fill(0.0);
        }
        let x = Tensor::new(vec![2, 4], vec![1.0, -2.0, 3.0, 0.5, 9.0, 9.0, 9.0, 9.0]).unwrap();
        let (logits, _) = net.forward(0, &x, Mode::Eval).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_head_reproduces_input() {
        let spec = NetworkSpec {
            input_shape: vec![2],
            trunk: vec![],
        };
        let mut net = init_network(&spec, &[HeadSpec::new(0, 2)], 0).unwrap();
        net.params_mut()[0].data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let (logits, _) = net.forward(0, &x, Mode::Eval).unwrap();
        assert_eq!(logits.data(), &[3.0, 4.0]);
    }

    #[test]
    fn eval_forward_is_repeatable_with_dropout_present() {
        let spec = NetworkSpec::mlp(4, &[6], 0.5);
        let net = init_network(&spec, &[HeadSpec::new(0, 2)], 1).unwrap();
        let x = Tensor::new(vec![3, 4], (0..12).map(|v| v as f64 / 7.0).collect()).unwrap();
        let a = net.forward(0, &x, Mode::Eval).unwrap().0;
        let b = net.forward(0, &x, Mode::Eval).unwrap().0;
        assert_eq!(a, b);
        let t1 = net.forward(0, &x, Mode::Train { dropout_seed: 1 }).unwrap().0;
        let t2 = net.forward(0, &x, Mode::Train { dropout_seed: 2 }).unwrap().0;
        assert_ne!(t1, t2);
    }

    #[test]
    fn zero_dlogits_give_zero_gradients() {
        let spec = NetworkSpec::small_cnn([1, 8, 8], 2, 0.0);
        let net = init_network(&spec, &[HeadSpec::new(0, 3)], 2).unwrap();
        let x = Tensor::new(vec![2, 1, 8, 8], (0..128).map(|v| (v as f64).cos()).collect()).unwrap();
        let (_, cache) = net.forward(0, &x, Mode::Deterministic).unwrap();
        let g = net.backward(&cache, &Tensor::zeros(&[2, 3]), 0).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn head_bias_gradient_is_column_sum_of_dlogits() {
        let net = init_network(&dense_spec(), &[HeadSpec::new(0, 3)], 4).unwrap();
        let x = Tensor::new(vec![4, 4], (0..16).map(|v| (v as f64 * 0.3).sin()).collect()).unwrap();
        let (logits, cache) = net.forward(0, &x, Mode::Deterministic).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &[0, 1, 2, 1]).unwrap();
        let g = net.backward(&cache, &dlogits, 0).unwrap();
        // dlogits already carries the 1/batch factor, so the bias gradient is
        // the batch mean of the unscaled per-example gradient
        let bias = g.tensors.last().unwrap();
        for c in 0..3 {
            let col: f64 = (0..4).map(|r| dlogits.row(r)[c]).sum();
            assert!((bias.data()[c] - col).abs() < 1e-15);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = init_network(&dense_spec(), &[HeadSpec::new(0, 2)], 0).unwrap();
        let x = Tensor::new(vec![1, 4], vec![1.0; 4]).unwrap();
        let (_, cache) = net.forward(0, &x, Mode::Deterministic).unwrap();
        net.params_mut();
        let err = net.backward(&cache, &Tensor::zeros(&[1, 2]), 0);
        assert!(matches!(err, Err(Error::StaleCache(_))));
        let other = init_network(&dense_spec(), &[HeadSpec::new(0, 2)], 0).unwrap();
        assert!(matches!(
            other.backward(&cache, &Tensor::zeros(&[1, 2]), 0),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let spec = NetworkSpec {
            input_shape: vec![1],
            trunk: vec![LayerSpec::BatchNorm],
        };
        let mut net = init_network(&spec, &[HeadSpec::new(0, 2)], 0).unwrap();
        let x = Tensor::new(vec![2, 1], vec![4.0, 6.0]).unwrap();
        let (_, cache) = net.forward(0, &x, Mode::Train { dropout_seed: 0 }).unwrap();
        net.update_running_stats(&cache).unwrap();
        let LayerParams::BatchNorm {
            running_mean,
            running_var,
            ..
        } = &net.layer_params()[0]
        else {
            panic!()
        };
        assert!((running_mean.data()[0] - 0.5).abs() < 1e-12);
        // unbiased batch variance = 2
        assert!((running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-12);
    }
}
