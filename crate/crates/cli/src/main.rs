use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modelzoo_cli::commands::record_failure;
use modelzoo_cli::{cmd_competition, cmd_report, cmd_run, CliError, CommandOptions, CompetitionMode};

#[derive(Parser)]
#[command(name = "modelzoo", version, about = "Continual learning with a zoo of small multi-head networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir or runs/<config name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use this value for the data, init and sampling seeds.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured learner over the task stream.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Measure task competition with the multi-head learner.
    Competition {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "pairwise")]
        mode: CompetitionMode,
        /// Worker threads for independent cell runs.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Summarize finished run directories as CSV.
    Report {
        run_dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn options(common: Common, threads: usize) -> CommandOptions {
    CommandOptions {
        config: common.config,
        out: common.out,
        seed_override: common.seed_override,
        threads,
    }
}

fn fail(opts: &CommandOptions, err: CliError) -> ExitCode {
    let record = serde_json::to_string(&err.record()).unwrap_or_default();
    eprintln!("error: {err}");
    eprintln!("{record}");
    if let Some(path) = record_failure(opts, &err) {
        eprintln!("error record written to {}", path.display());
    }
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { common } => {
            let opts = options(common, 1);
            match cmd_run(&opts) {
                Ok(done) => {
                    println!("{}", serde_json::to_string_pretty(&done.metrics).unwrap_or_default());
                    println!("artifacts in {}", done.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&opts, e),
            }
        }
        Command::Competition { common, mode, threads } => {
            let opts = options(common, threads.max(1));
            match cmd_competition(&opts, mode) {
                Ok(m) => {
                    print!("{}", m.to_csv());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&opts, e),
            }
        }
        Command::Report { run_dirs, out } => {
            let report = cmd_report(&run_dirs);
            for w in &report.warnings {
                eprintln!("{}", serde_json::to_string(w).unwrap_or_default());
            }
            let csv = report.to_csv();
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, csv) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::FAILURE;
                    }
                }
                None => print!("{csv}"),
            }
            ExitCode::SUCCESS
        }
    }
}
