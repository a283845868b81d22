//! Experiment pipeline driver: data preparation, meta-store construction,
//! net training, optimization runs, and report emission, all from one
//! declarative config.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, OutPaths};
use manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "hypercast",
    version,
    about = "Meta-learned hyper-parameter optimization for traffic forecasting models"
)]
struct Cli {
    /// Experiment config file (`key = value` lines); defaults apply if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic traffic grid.
    Synth,
    /// Ingest raw records (format A) and impute missing values.
    Ingest,
    /// Export the entropy / conditional-entropy analysis of the store.
    EntropyReport,
    /// Grid-search the meta tasks and assemble the meta-knowledge (resumable).
    BuildMeta,
    /// Train the task-distance network.
    TrainDistance,
    /// Train the fitness screener.
    TrainScreener,
    /// Run the full warm-started screened search on the test tasks.
    Optimize,
    /// Run the configured baseline methods on the test tasks.
    Baseline,
    /// Aggregate run results into the comparison report.
    Report,
}

impl Command {
    fn stage_name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::EntropyReport => "entropy-report",
            Command::BuildMeta => "build-meta",
            Command::TrainDistance => "train-distance",
            Command::TrainScreener => "train-screener",
            Command::Optimize => "optimize",
            Command::Baseline => "baseline",
            Command::Report => "report",
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let paths = OutPaths::new(&cli.out);
    std::fs::create_dir_all(&paths.root)?;
    let mut manifest = Manifest::open_or_create(&paths.manifest(), cfg.hash())?;
    std::fs::write(paths.config_snapshot(), cfg.snapshot())?;

    match cli.command {
        Command::Synth => stages::cmd_synth(&cfg, &paths, &mut manifest),
        Command::Ingest => stages::cmd_ingest(&cfg, &paths, &mut manifest),
        Command::EntropyReport => stages::cmd_entropy_report(&cfg, &paths, &mut manifest),
        Command::BuildMeta => stages::cmd_build_meta(&cfg, &paths, &mut manifest),
        Command::TrainDistance => stages::cmd_train_distance(&cfg, &paths, &mut manifest),
        Command::TrainScreener => stages::cmd_train_screener(&cfg, &paths, &mut manifest),
        Command::Optimize => stages::cmd_optimize(&cfg, &paths, &mut manifest),
        Command::Baseline => stages::cmd_baseline(&cfg, &paths, &mut manifest),
        Command::Report => stages::cmd_report(&cfg, &paths, &mut manifest),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error in stage {}: {err:#}", cli.command.stage_name());
            ExitCode::FAILURE
        }
    }
}
