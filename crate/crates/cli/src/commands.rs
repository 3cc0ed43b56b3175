use std::path::{Path, PathBuf};

use modelzoo::metrics::{
    incremental_competition, inference_ms_per_example, pairwise_competition, CompetitionKind, MetricsReport,
};
use modelzoo::nn::checkpoint;
use modelzoo::zoo::{run_continual, run_multihead_baseline, Seeds};
use modelzoo::RunLog;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{verify_manifest, ArtifactWriter};
use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::{CliError, CliResult};

pub const RUNLOG_CSV: &str = "runlog.csv";
pub const RUNLOG_JSON: &str = "runlog.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const ERROR_JSON: &str = "error.json";

/// Settings shared by the subcommands that read a config file.
#[derive(Debug, Clone, Default)]
pub struct CommandOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    /// Replaces all three seeds.
    pub seed_override: Option<u64>,
    pub threads: usize,
}

impl CommandOptions {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            threads: 1,
            ..Default::default()
        }
    }

    pub fn out(mut self, out: impl Into<PathBuf>) -> Self {
        self.out = Some(out.into());
        self
    }

    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed_override {
            cfg.seeds = Seeds::all(s);
        }
        Ok(cfg)
    }

    /// `--out`, else the config's `output_dir`, else `runs/<config stem>`.
    pub fn output_dir(&self, cfg: Option<&ExperimentConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
            .unwrap_or_else(|| {
                let stem = self.config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                Path::new("runs").join(stem)
            })
    }
}

/// Run description stored next to the accuracy log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub learner: String,
    pub dataset: String,
    pub replay_fraction: f64,
    pub epochs: usize,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub config: ExperimentConfig,
    pub runlog: RunLog,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub log: RunLog,
    pub metrics: MetricsReport,
}

/// Runs the configured learner over its task stream and writes the result
/// artifacts.
pub fn cmd_run(opts: &CommandOptions) -> CliResult<RunOutcome> {
    let cfg = opts.load()?;
    let out_dir = opts.output_dir(Some(&cfg));
    let stream = cfg.build_stream()?;
    let learner = cfg.learner(&stream)?;
    let mut w = ArtifactWriter::create(&out_dir)?;
    w.write("config.toml", cfg.to_toml())?;
    w.write("stream_manifest.json", stream.manifest().to_json()? + "\n")?;

    let kind = cfg.learner.kind;
    log::info!(
        "{} on {} ({} tasks, {} parameters per member)",
        kind.as_str(),
        cfg.dataset_name(),
        stream.len(),
        modelzoo::nn::init_network(&learner.network, &[modelzoo::HeadSpec::new(0, 2)], 0)?.num_params()
    );
    let (log, inference_ms) = match kind {
        LearnerKind::Multihead => {
            let (log, net) = run_multihead_baseline(&stream, &learner, &cfg.seeds)?;
            std::fs::create_dir_all(out_dir.join("checkpoints")).map_err(|e| CliError::io(&out_dir, e))?;
            checkpoint::save(&net, &out_dir.join("checkpoints/multihead.json"))?;
            w.record("checkpoints/multihead.json")?;
            (log, None)
        }
        _ => {
            let (log, zoo) = run_continual(&stream, &cfg.zoo_config(), &learner, &cfg.seeds)?;
            std::fs::create_dir_all(out_dir.join("checkpoints")).map_err(|e| CliError::io(&out_dir, e))?;
            for m in &zoo.members {
                let rel = format!("checkpoints/member_{:03}.json", m.episode);
                checkpoint::save(&m.network, &out_dir.join(&rel))?;
                w.record(&rel)?;
            }
            (log, Some(inference_ms_per_example(&zoo, &stream)?))
        }
    };
    let mut metrics = MetricsReport::from_log(&log)?;
    metrics.inference_ms_per_example = inference_ms;

    let meta = RunMeta {
        learner: kind.as_str().to_string(),
        dataset: cfg.dataset_name(),
        replay_fraction: cfg.effective_replay_fraction(),
        epochs: cfg.optim.epochs,
        seeds: cfg.seeds,
    };
    w.write(RUNLOG_CSV, log.to_csv())?;
    w.write("losses.csv", log.losses_csv())?;
    let record = RunRecord {
        meta: meta.clone(),
        config: cfg.clone(),
        runlog: log.clone(),
    };
    w.write_json(RUNLOG_JSON, &record)?;
    w.write_json(METRICS_JSON, &metrics)?;
    w.finish(json!({
        "format": "modelzoo-run/1",
        "command": "run",
        "meta": meta,
        "config": cfg,
    }))?;
    Ok(RunOutcome { out_dir, log, metrics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CompetitionMode {
    Pairwise,
    Incremental,
}

/// Trains the multi-head learner on task pairs or growing prefixes of the
/// stream and writes the resulting matrix.
pub fn cmd_competition(opts: &CommandOptions, mode: CompetitionMode) -> CliResult<modelzoo::metrics::CompetitionMatrix> {
    let cfg = opts.load()?;
    let out_dir = opts.output_dir(Some(&cfg));
    let stream = cfg.build_stream()?;
    let learner = cfg.learner(&stream)?;
    let mut w = ArtifactWriter::create(&out_dir)?;
    w.write("config.toml", cfg.to_toml())?;
    w.write("stream_manifest.json", stream.manifest().to_json()? + "\n")?;
    let matrix = match mode {
        CompetitionMode::Pairwise => pairwise_competition(&stream, &learner, &cfg.seeds, opts.threads)?,
        CompetitionMode::Incremental => incremental_competition(&stream, &learner, &cfg.seeds, opts.threads)?,
    };
    let mut runs = Vec::with_capacity(matrix.runs.len());
    for (r, run) in matrix.runs.iter().enumerate() {
        let rel = format!(
            "cells/cell_{}.json",
            run.trained_tasks.iter().map(usize::to_string).collect::<Vec<_>>().join("_")
        );
        let rel = if runs.iter().any(|v: &serde_json::Value| v["file"] == rel) {
            format!("cells/run_{r:03}.json")
        } else {
            rel
        };
        w.write_json(&rel, run)?;
        runs.push(json!({ "trained_tasks": run.trained_tasks, "seeds": run.seeds, "file": rel }));
    }
    w.write("matrix.csv", matrix.to_csv())?;
    w.write_json("matrix.json", &matrix)?;
    w.finish(json!({
        "format": "modelzoo-competition/1",
        "command": "competition",
        "mode": match matrix.kind { CompetitionKind::Pairwise => "pairwise", CompetitionKind::Incremental => "incremental" },
        "config": cfg,
        "runs": runs,
    }))?;
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run_dir: String,
    pub learner: String,
    pub dataset: String,
    pub replay_fraction: f64,
    pub epochs: usize,
    pub average_accuracy: f64,
    pub forgetting: f64,
    pub forward_transfer: f64,
    pub training_minutes: f64,
    pub inference_ms_per_example: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportWarning {
    pub run_dir: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<ReportWarning>,
}

pub const REPORT_HEADER: &str = "learner,dataset,replay_fraction,epochs,average_accuracy,forgetting,forward_transfer,training_minutes,inference_ms_per_example,run_dir";

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.learner,
                r.dataset,
                r.replay_fraction,
                r.epochs,
                r.average_accuracy,
                r.forgetting,
                r.forward_transfer,
                r.training_minutes,
                r.inference_ms_per_example.map_or("NaN".to_string(), |v| v.to_string()),
                r.run_dir
            ));
        }
        out
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn report_row(dir: &Path) -> CliResult<ReportRow> {
    verify_manifest(dir)?;
    let record: RunRecord = read_json(&dir.join(RUNLOG_JSON))?;
    let metrics: MetricsReport = read_json(&dir.join(METRICS_JSON))?;
    Ok(ReportRow {
        run_dir: dir.display().to_string(),
        learner: record.meta.learner,
        dataset: record.meta.dataset,
        replay_fraction: record.meta.replay_fraction,
        epochs: record.meta.epochs,
        average_accuracy: metrics.average_accuracy,
        forgetting: metrics.forgetting,
        forward_transfer: metrics.forward_transfer,
        training_minutes: metrics.training_minutes,
        inference_ms_per_example: metrics.inference_ms_per_example,
    })
}

/// One row per complete run directory, sorted by dataset then learner;
/// incomplete directories are skipped with a warning.
pub fn cmd_report(dirs: &[PathBuf]) -> Report {
    let mut report = Report::default();
    for dir in dirs {
        match report_row(dir) {
            Ok(row) => report.rows.push(row),
            Err(e) => {
                log::warn!("skipping {}: {e}", dir.display());
                report.warnings.push(ReportWarning {
                    run_dir: dir.display().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    report
        .rows
        .sort_by(|a, b| (&a.dataset, &a.learner).cmp(&(&b.dataset, &b.learner)));
    report
}

/// Writes `error.json` into the output directory when it can be determined.
pub fn record_failure(opts: &CommandOptions, err: &CliError) -> Option<PathBuf> {
    let cfg = ExperimentConfig::load(&opts.config).ok();
    let dir = opts.output_dir(cfg.as_ref());
    std::fs::create_dir_all(&dir).ok()?;
    let path = dir.join(ERROR_JSON);
    let text = serde_json::to_string_pretty(&err.record()).ok()? + "\n";
    std::fs::write(&path, text).ok()?;
    Some(path)
}
