//! Experiment configuration files.

use std::path::{Path, PathBuf};

use modelzoo::nn::{LayerSpec, NetworkSpec};
use modelzoo::tasks::{
    load_delimited, load_idx_corpus, permute_tasks, rotate_tasks, split_tasks, synthetic_gaussian_tasks, Corpus,
    StreamOptions, SyntheticConfig,
};
use modelzoo::zoo::{Learner, Sampling, Seeds};
use modelzoo::{AugmentConfig, OptimConfig, TaskStream, ZooConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stream: StreamConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Seeds {
    Seeds::all(0)
}

/// IDX image and label files; the test pair, when given, supplies the
/// validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
}

fn default_val_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamConfig {
    Split {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        files: IdxFiles,
        labels_per_task: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples_per_class: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    Rotated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        files: IdxFiles,
        angles_deg: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples_per_class: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    Permuted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        files: IdxFiles,
        n_tasks: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples_per_class: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        angles_deg: Vec<f64>,
        #[serde(default = "synthetic_dim")]
        dim: usize,
        #[serde(default = "synthetic_classes")]
        classes: usize,
        #[serde(default = "synthetic_samples")]
        samples_per_class: usize,
        #[serde(default = "synthetic_radius")]
        mean_radius: f64,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    Delimited {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        labels_per_task: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples_per_class: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
}

/// Dotted key (`table.key`) whose line contains byte offset `pos`, if the
/// line is a plain `key = value` assignment.
fn field_at(text: &str, pos: usize) -> Option<String> {
    let mut table = String::new();
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        let end = start + line.len();
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        if (start..end).contains(&pos) {
            let key = trimmed.split_once('=')?.0.trim();
            if key.is_empty() || trimmed.starts_with('[') {
                return (!table.is_empty()).then_some(table);
            }
            return Some(if table.is_empty() { key.to_string() } else { format!("{table}.{key}") });
        }
        start = end;
    }
    (!table.is_empty()).then_some(table)
}

fn synthetic_dim() -> usize {
    SyntheticConfig::default().dim
}
fn synthetic_classes() -> usize {
    SyntheticConfig::default().classes
}
fn synthetic_samples() -> usize {
    SyntheticConfig::default().samples_per_class
}
fn synthetic_radius() -> f64 {
    SyntheticConfig::default().mean_radius
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Zoo,
    ZooUniform,
    Isolated,
    Multihead,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Zoo => "zoo",
            LearnerKind::ZooUniform => "zoo-uniform",
            LearnerKind::Isolated => "isolated",
            LearnerKind::Multihead => "multihead",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub max_beta: usize,
    pub beta_includes_current: bool,
    /// Ignored by the isolated and multihead learners.
    pub replay_fraction: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        let z = ZooConfig::default();
        Self {
            kind: LearnerKind::Zoo,
            max_beta: z.max_beta,
            beta_includes_current: z.beta_includes_current,
            replay_fraction: z.replay_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    SmallCnn,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub kind: NetworkKind,
    /// Filters per convolution of the small CNN.
    pub filters: usize,
    /// Hidden widths of the MLP.
    pub hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            kind: NetworkKind::SmallCnn,
            filters: 80,
            hidden: vec![100],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> CliResult<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().and_then(|span| field_at(text, span.start));
            CliError::Config {
                path: path.to_path_buf(),
                message: match field {
                    Some(f) => format!("{f}: {}", e.message()),
                    None => e.to_string(),
                },
            }
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            let joined = if p.is_relative() { base.join(&*p) } else { p.clone() };
            *p = std::path::absolute(&joined).unwrap_or(joined);
        };
        match &mut self.stream {
            StreamConfig::Split { files, .. }
            | StreamConfig::Rotated { files, .. }
            | StreamConfig::Permuted { files, .. } => {
                fix(&mut files.train_images);
                fix(&mut files.train_labels);
                files.test_images.as_mut().map(fix);
                files.test_labels.as_mut().map(fix);
            }
            StreamConfig::Delimited { path, test_path, .. } => {
                fix(path);
                test_path.as_mut().map(fix);
            }
            StreamConfig::Synthetic { .. } => {}
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    fn invalid(path: &Path, field: &str, message: impl std::fmt::Display) -> CliError {
        CliError::Config {
            path: path.to_path_buf(),
            message: format!("{field}: {message}"),
        }
    }

    pub fn input_files(&self) -> Vec<&Path> {
        match &self.stream {
            StreamConfig::Split { files, .. }
            | StreamConfig::Rotated { files, .. }
            | StreamConfig::Permuted { files, .. } => {
                let mut v = vec![files.train_images.as_path(), files.train_labels.as_path()];
                v.extend(files.test_images.as_deref());
                v.extend(files.test_labels.as_deref());
                v
            }
            StreamConfig::Delimited { path, test_path, .. } => {
                let mut v = vec![path.as_path()];
                v.extend(test_path.as_deref());
                v
            }
            StreamConfig::Synthetic { .. } => Vec::new(),
        }
    }

    fn validate(&self, path: &Path) -> CliResult<()> {
        for f in self.input_files() {
            if !f.is_file() {
                return Err(CliError::MissingInput(f.to_path_buf()));
            }
        }
        if let StreamConfig::Split { files, .. }
        | StreamConfig::Rotated { files, .. }
        | StreamConfig::Permuted { files, .. } = &self.stream
        {
            if files.test_images.is_some() != files.test_labels.is_some() {
                return Err(Self::invalid(path, "stream.test_images", "test images and labels must be given together"));
            }
        }
        self.optim
            .validate()
            .map_err(|e| Self::invalid(path, "optim", e))?;
        self.zoo_config()
            .validate()
            .map_err(|e| Self::invalid(path, "learner", e))?;
        if self.network.kind == NetworkKind::SmallCnn && self.network.filters == 0 {
            return Err(Self::invalid(path, "network.filters", "must be positive"));
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        let (name, generator) = match &self.stream {
            StreamConfig::Split { name, .. } => (name, "split"),
            StreamConfig::Rotated { name, .. } => (name, "rotated"),
            StreamConfig::Permuted { name, .. } => (name, "permuted"),
            StreamConfig::Synthetic { name, .. } => (name, "synthetic"),
            StreamConfig::Delimited { name, .. } => (name, "delimited"),
        };
        name.clone().unwrap_or_else(|| generator.to_string())
    }

    pub fn zoo_config(&self) -> ZooConfig {
        let l = &self.learner;
        ZooConfig {
            max_beta: l.max_beta,
            beta_includes_current: l.beta_includes_current,
            replay_fraction: if l.kind == LearnerKind::Isolated { 0.0 } else { l.replay_fraction },
            sampling: if l.kind == LearnerKind::ZooUniform {
                Sampling::Uniform
            } else {
                Sampling::Boosted
            },
        }
    }

    /// Replay fraction the learner actually uses.
    pub fn effective_replay_fraction(&self) -> f64 {
        match self.learner.kind {
            LearnerKind::Multihead => 1.0,
            _ => self.zoo_config().replay_fraction,
        }
    }

    fn corpus_from_idx(files: &IdxFiles) -> CliResult<Corpus> {
        let test = files
            .test_images
            .as_deref()
            .zip(files.test_labels.as_deref());
        Ok(load_idx_corpus(&files.train_images, &files.train_labels, test)?)
    }

    pub fn build_stream(&self) -> CliResult<TaskStream> {
        let opts = |val_fraction: f64, samples_per_class: Option<usize>| StreamOptions {
            val_fraction,
            samples_per_class,
            seed: self.seeds.data,
        };
        let stream = match &self.stream {
            StreamConfig::Split {
                files,
                labels_per_task,
                samples_per_class,
                val_fraction,
                ..
            } => split_tasks(&Self::corpus_from_idx(files)?, *labels_per_task, &opts(*val_fraction, *samples_per_class))?,
            StreamConfig::Rotated {
                files,
                angles_deg,
                samples_per_class,
                val_fraction,
                ..
            } => rotate_tasks(&Self::corpus_from_idx(files)?, angles_deg, &opts(*val_fraction, *samples_per_class))?,
            StreamConfig::Permuted {
                files,
                n_tasks,
                samples_per_class,
                val_fraction,
                ..
            } => permute_tasks(&Self::corpus_from_idx(files)?, *n_tasks, &opts(*val_fraction, *samples_per_class))?,
            StreamConfig::Synthetic {
                angles_deg,
                dim,
                classes,
                samples_per_class,
                mean_radius,
                val_fraction,
                ..
            } => synthetic_gaussian_tasks(&SyntheticConfig {
                angles_deg: angles_deg.clone(),
                dim: *dim,
                classes: *classes,
                samples_per_class: *samples_per_class,
                mean_radius: *mean_radius,
                val_fraction: *val_fraction,
                seed: self.seeds.data,
            })?,
            StreamConfig::Delimited {
                path,
                test_path,
                labels_per_task,
                samples_per_class,
                val_fraction,
                ..
            } => {
                let mut corpus = load_delimited(path)?;
                if let Some(tp) = test_path {
                    let test = load_delimited(tp)?;
                    let mut sources = corpus.sources.clone();
                    sources.extend(test.sources.clone());
                    corpus = Corpus::new(corpus.train, Some(test.train))?;
                    corpus.sources = sources;
                }
                split_tasks(&corpus, *labels_per_task, &opts(*val_fraction, *samples_per_class))?
            }
        };
        Ok(stream)
    }

    pub fn network_spec(&self, input_shape: &[usize]) -> CliResult<NetworkSpec> {
        let p = self.optim.dropout_p;
        let spec = match self.network.kind {
            NetworkKind::SmallCnn => match *input_shape {
                [c, h, w] => NetworkSpec::small_cnn([c, h, w], self.network.filters, p),
                _ => {
                    return Err(CliError::Config {
                        path: PathBuf::new(),
                        message: format!("network.kind: small_cnn needs image inputs, got shape {input_shape:?}"),
                    })
                }
            },
            NetworkKind::Mlp => {
                let flat: usize = input_shape.iter().product();
                let mut spec = NetworkSpec::mlp(flat, &self.network.hidden, p);
                if input_shape.len() > 1 {
                    spec.input_shape = input_shape.to_vec();
                    spec.trunk.insert(0, LayerSpec::Flatten);
                }
                spec
            }
        };
        spec.shapes()?;
        Ok(spec)
    }

    pub fn learner(&self, stream: &TaskStream) -> CliResult<Learner> {
        let first = stream.get(0)?;
        Ok(Learner {
            network: self.network_spec(first.input_shape())?,
            optim: self.optim,
            augment: self.augment,
        })
    }
}
