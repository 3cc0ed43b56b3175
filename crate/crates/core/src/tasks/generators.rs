//! Task-stream generators: label splits, rotations, pixel permutations and
//! synthetic Gaussian tasks with controllable relatedness.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::idx::read_idx;
use super::{Example, Provenance, SourceFile, TaskDataset, TaskStream};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::tensor::Tensor;

/// Inputs (one tensor per example) and their labels.
#[derive(Debug, Clone, Default)]
pub struct LabeledData {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A labelled source corpus, optionally with its canonical test split.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: LabeledData,
    pub test: Option<LabeledData>,
    pub num_classes: usize,
    pub sources: Vec<SourceFile>,
}

impl Corpus {
    pub fn new(train: LabeledData, test: Option<LabeledData>) -> Result<Self> {
        if train.inputs.len() != train.labels.len() || train.is_empty() {
            return Err(Error::EmptyDataset("corpus needs matching, non-empty inputs and labels".into()));
        }
        if let Some(t) = &test {
            if t.inputs.len() != t.labels.len() {
                return Err(Error::Shape("test inputs and labels differ in length".into()));
            }
        }
        let num_classes = train
            .labels
            .iter()
            .chain(test.iter().flat_map(|t| &t.labels))
            .max()
            .map_or(0, |m| m + 1);
        Ok(Self {
            train,
            test,
            num_classes,
            sources: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamOptions {
    /// Fraction of each class held out for validation when the corpus has no test split.
    pub val_fraction: f64,
    /// Keep at most this many training examples per class.
    pub samples_per_class: Option<usize>,
    pub seed: u64,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            val_fraction: 0.2,
            samples_per_class: None,
            seed: 0,
        }
    }
}

fn split_images(array: &super::idx::IdxArray) -> Result<Vec<Tensor>> {
    let t = array.to_tensor()?;
    let sample_shape: Vec<usize> = match t.shape() {
        [_, h, w] => vec![1, *h, *w],
        [_, rest @ ..] => rest.to_vec(),
        [] => unreachable!(),
    };
    let sample_shape = if sample_shape.is_empty() { vec![1] } else { sample_shape };
    (0..t.rows())
        .map(|i| Tensor::new(sample_shape.clone(), t.row(i).to_vec()))
        .collect()
}

fn read_pair(images: &Path, labels: &Path) -> Result<LabeledData> {
    let inputs = split_images(&read_idx(images)?)?;
    let label_path = labels;
    let labels = read_idx(label_path)?.labels()?;
    if inputs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} has {} images but {} has {} labels",
            images.display(),
            inputs.len(),
            label_path.display(),
            labels.len()
        )));
    }
    Ok(LabeledData { inputs, labels })
}

/// Loads IDX image/label files; 3-d image arrays become `[1, H, W]` examples.
pub fn load_idx_corpus(
    train_images: &Path,
    train_labels: &Path,
    test: Option<(&Path, &Path)>,
) -> Result<Corpus> {
    let train = read_pair(train_images, train_labels)?;
    let test_data = test.map(|(i, l)| read_pair(i, l)).transpose()?;
    let mut corpus = Corpus::new(train, test_data)?;
    let mut paths = vec![train_images, train_labels];
    if let Some((i, l)) = test {
        paths.extend([i, l]);
    }
    corpus.sources = paths.into_iter().map(SourceFile::hash).collect::<Result<_>>()?;
    Ok(corpus)
}

/// Indices per class, in corpus order.
fn by_class(labels: &[usize], classes: &BTreeSet<usize>) -> Vec<(usize, Vec<usize>)> {
    classes
        .iter()
        .map(|&c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect()))
        .collect()
}

/// Train and validation indices for a class subset. Validation comes from the
/// test split when present, otherwise from a stratified, seeded hold-out.
/// Shuffles are seeded per class, so every task built on the same classes
/// sees the same split.
fn select_indices(
    corpus: &Corpus,
    classes: &BTreeSet<usize>,
    opts: &StreamOptions,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&opts.val_fraction) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction {} outside [0, 1)",
            opts.val_fraction
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, mut idx) in by_class(&corpus.train.labels, classes) {
        let mut rng = seed::derived_rng(opts.seed, &[stream::SPLIT, c as u64]);
        idx.shuffle(&mut rng);
        let held = if corpus.test.is_some() {
            0
        } else {
            (opts.val_fraction * idx.len() as f64).round() as usize
        };
        val.extend_from_slice(&idx[..held]);
        let rest = &idx[held..];
        let keep = opts.samples_per_class.map_or(rest.len(), |n| n.min(rest.len()));
        train.extend_from_slice(&rest[..keep]);
    }
    if let Some(test) = &corpus.test {
        val = by_class(&test.labels, classes)
            .into_iter()
            .flat_map(|(_, idx)| idx)
            .collect();
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn gather(
    data: &LabeledData,
    idx: &[usize],
    relabel: impl Fn(usize) -> usize,
    transform: impl Fn(&Tensor) -> Tensor,
) -> Vec<Example> {
    idx.iter()
        .map(|&i| Example::new(transform(&data.inputs[i]), relabel(data.labels[i])))
        .collect()
}

fn val_source(corpus: &Corpus) -> &LabeledData {
    corpus.test.as_ref().unwrap_or(&corpus.train)
}

/// Consecutive groups of `labels_per_task` classes form the tasks; labels are
/// remapped to `0..labels_per_task` within each task.
pub fn split_tasks(corpus: &Corpus, labels_per_task: usize, opts: &StreamOptions) -> Result<TaskStream> {
    if labels_per_task == 0 || corpus.num_classes % labels_per_task != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} classes cannot be split into groups of {labels_per_task}",
            corpus.num_classes
        )));
    }
    let n_tasks = corpus.num_classes / labels_per_task;
    let mut tasks = Vec::with_capacity(n_tasks);
    for t in 0..n_tasks {
        let lo = t * labels_per_task;
        let classes: BTreeSet<usize> = (lo..lo + labels_per_task).collect();
        let (tr, va) = select_indices(corpus, &classes, opts)?;
        let name = format!("classes {}-{}", lo, lo + labels_per_task - 1);
        tasks.push(TaskDataset::from_raw(
            t,
            name,
            labels_per_task,
            gather(&corpus.train, &tr, |l| l - lo, Tensor::clone),
            gather(val_source(corpus), &va, |l| l - lo, Tensor::clone),
        )?);
    }
    TaskStream::new(
        tasks,
        Provenance {
            generator: "split".into(),
            seed: opts.seed,
            params: json!({ "labels_per_task": labels_per_task, "options": opts }),
            sources: corpus.sources.clone(),
        },
    )
}

/// Rotates every `[C, H, W]` plane about the image centre by `angle_deg`
/// (counter-clockwise in x-right/y-down pixel coordinates maps +x towards +y),
/// bilinear interpolation, zero outside the frame.
pub fn rotate_image(image: &Tensor, angle_deg: f64) -> Result<Tensor> {
    let (c, h, w) = match *image.shape() {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::Shape(format!(
                "rotation needs a 2-d image, got {:?}",
                image.shape()
            )))
        }
    };
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    let at = |plane: &[f64], y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for r in 0..h {
            for col in 0..w {
                let (dx, dy) = (col as f64 - cx, r as f64 - cy);
                // inverse rotation: where does this output pixel come from
                let sx = cos * dx + sin * dy + cx;
                let sy = -sin * dx + cos * dy + cy;
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = (1.0 - fy) * ((1.0 - fx) * at(plane, y0, x0) + fx * at(plane, y0, x0 + 1))
                    + fy * ((1.0 - fx) * at(plane, y0 + 1, x0) + fx * at(plane, y0 + 1, x0 + 1));
                out[ch * h * w + r * w + col] = v;
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// One task per angle; each task is the whole corpus rotated by that angle.
pub fn rotate_tasks(corpus: &Corpus, angles_deg: &[f64], opts: &StreamOptions) -> Result<TaskStream> {
    let classes: BTreeSet<usize> = (0..corpus.num_classes).collect();
    let (tr, va) = select_indices(corpus, &classes, opts)?;
    let mut tasks = Vec::with_capacity(angles_deg.len());
    for (t, &angle) in angles_deg.iter().enumerate() {
        let rot = |x: &Tensor| rotate_image(x, angle).expect("checked image shape");
        if let Some(first) = corpus.train.inputs.first() {
            rotate_image(first, angle)?;
        }
        tasks.push(TaskDataset::from_raw(
            t,
            format!("rotated {angle} deg"),
            corpus.num_classes,
            gather(&corpus.train, &tr, |l| l, rot),
            gather(val_source(corpus), &va, |l| l, rot),
        )?);
    }
    TaskStream::new(
        tasks,
        Provenance {
            generator: "rotated".into(),
            seed: opts.seed,
            params: json!({ "angles_deg": angles_deg, "options": opts }),
            sources: corpus.sources.clone(),
        },
    )
}

/// Pixel permutation of task `task`: identity for task 0, seeded shuffles
/// otherwise. Output pixel `j` takes input pixel `perm[j]`.
pub fn permutation(pixels: usize, seed: u64, task: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..pixels).collect();
    if task > 0 {
        let mut rng = seed::derived_rng(seed, &[stream::PERMUTE, task as u64]);
        perm.shuffle(&mut rng);
    }
    perm
}

pub fn permute_tasks(corpus: &Corpus, n_tasks: usize, opts: &StreamOptions) -> Result<TaskStream> {
    if n_tasks == 0 {
        return Err(Error::InvalidArgument("need at least one permuted task".into()));
    }
    let classes: BTreeSet<usize> = (0..corpus.num_classes).collect();
    let (tr, va) = select_indices(corpus, &classes, opts)?;
    let pixels = corpus.train.inputs[0].len();
    let mut tasks = Vec::with_capacity(n_tasks);
    for t in 0..n_tasks {
        let perm = permutation(pixels, opts.seed, t);
        let apply = |x: &Tensor| {
            let d = x.data();
            Tensor::new(x.shape().to_vec(), perm.iter().map(|&p| d[p]).collect())
                .expect("same shape")
        };
        tasks.push(TaskDataset::from_raw(
            t,
            if t == 0 { "original".into() } else { format!("permutation {t}") },
            corpus.num_classes,
            gather(&corpus.train, &tr, |l| l, apply),
            gather(val_source(corpus), &va, |l| l, apply),
        )?);
    }
    TaskStream::new(
        tasks,
        Provenance {
            generator: "permuted".into(),
            seed: opts.seed,
            params: json!({ "n_tasks": n_tasks, "options": opts }),
            sources: corpus.sources.clone(),
        },
    )
}

/// Isotropic Gaussian class blobs whose means sit on a circle of radius
/// `mean_radius` in the first two coordinates; a task's angle rotates the
/// whole sample in that plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// One relatedness angle (degrees) per task.
    pub angles_deg: Vec<f64>,
    pub dim: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    pub mean_radius: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            angles_deg: vec![0.0],
            dim: 2,
            classes: 2,
            samples_per_class: 100,
            mean_radius: 2.0,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Class mean of `class` before rotation.
pub fn class_mean(cfg: &SyntheticConfig, class: usize) -> Vec<f64> {
    let phi = std::f64::consts::TAU * class as f64 / cfg.classes as f64;
    let mut m = vec![0.0; cfg.dim];
    m[0] = cfg.mean_radius * phi.cos();
    m[1] = cfg.mean_radius * phi.sin();
    m
}

/// Samples of one synthetic task drawn from `noise_seed`; the same seed
/// with angle 0 reproduces the base task exactly.
pub fn gaussian_samples(cfg: &SyntheticConfig, angle_deg: f64, noise_seed: u64) -> Result<LabeledData> {
    if cfg.dim < 2 || cfg.classes < 2 || cfg.samples_per_class == 0 {
        return Err(Error::InvalidArgument(
            "synthetic tasks need dim >= 2, classes >= 2 and samples".into(),
        ));
    }
    let mut rng = seed::rng(noise_seed);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let means: Vec<Vec<f64>> = (0..cfg.classes).map(|c| class_mean(cfg, c)).collect();
    let mut out = LabeledData::default();
    for _ in 0..cfg.samples_per_class {
        for (c, mean) in means.iter().enumerate() {
            let mut z: Vec<f64> = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            if angle_deg != 0.0 {
                let (a, b) = (z[0], z[1]);
                z[0] = cos * a - sin * b;
                z[1] = sin * a + cos * b;
            }
            out.inputs.push(Tensor::from_vec(z));
            out.labels.push(c);
        }
    }
    Ok(out)
}

pub fn synthetic_gaussian_tasks(cfg: &SyntheticConfig) -> Result<TaskStream> {
    let opts = StreamOptions {
        val_fraction: cfg.val_fraction,
        samples_per_class: None,
        seed: cfg.seed,
    };
    let mut tasks = Vec::with_capacity(cfg.angles_deg.len());
    for (t, &angle) in cfg.angles_deg.iter().enumerate() {
        let data = gaussian_samples(cfg, angle, seed::derive(cfg.seed, &[stream::NOISE, t as u64]))?;
        let corpus = Corpus::new(data, None)?;
        let classes: BTreeSet<usize> = (0..cfg.classes).collect();
        let (tr, va) = select_indices(&corpus, &classes, &opts)?;
        tasks.push(TaskDataset::from_raw(
            t,
            format!("gaussian {angle} deg"),
            cfg.classes,
            gather(&corpus.train, &tr, |l| l, Tensor::clone),
            gather(&corpus.train, &va, |l| l, Tensor::clone),
        )?);
    }
    TaskStream::new(
        tasks,
        Provenance {
            generator: "synthetic".into(),
            seed: cfg.seed,
            params: serde_json::to_value(cfg)?,
            sources: vec![],
        },
    )
}
