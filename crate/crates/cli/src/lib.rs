//! Experiment runner: config files in, result artifacts out.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_competition, cmd_report, cmd_run, CommandOptions, CompetitionMode, Report, RunOutcome};
pub use config::{ExperimentConfig, LearnerKind};
pub use error::{CliError, CliResult};
