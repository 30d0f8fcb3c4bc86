use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lazyrob::commands::{self, Command};
use lazyrob::config::{ExperimentConfig, Overrides};
use lazyrob::error::CliError;

/// Train lazy two-layer ReLU networks, attack them and check the concentration bounds.
#[derive(Parser, Debug)]
#[command(name = "lazyrob", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Runs executed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    /// IDX training images (optionally gzipped); switches the dataset to MNIST
    #[arg(long, global = true)]
    train_images: Option<PathBuf>,
    /// IDX training labels
    #[arg(long, global = true)]
    train_labels: Option<PathBuf>,
    /// IDX test images
    #[arg(long, global = true)]
    test_images: Option<PathBuf>,
    /// IDX test labels
    #[arg(long, global = true)]
    test_labels: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Lazy SGD (or adversarial training) over the d × m × C0 grid; writes checkpoints.
    Train,
    /// Projected adversarial training over d × m × V × R; robust accuracy grid.
    Advtrain,
    /// Minimal-step or single-step attack on trained checkpoints.
    Attack,
    /// Monte-Carlo violation frequencies of the initialisation bounds.
    Verify,
    /// Writes dataset caches for every d in the grid.
    DataPrepare,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lazyrob: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        out: cli.out.clone(),
        seed_offset: cli.seed_offset,
        train_images: cli.train_images.clone(),
        train_labels: cli.train_labels.clone(),
        test_images: cli.test_images.clone(),
        test_labels: cli.test_labels.clone(),
    });
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let command = match cli.command {
        Cmd::Train => Command::Train,
        Cmd::Advtrain => Command::Advtrain,
        Cmd::Attack => Command::Attack,
        Cmd::Verify => Command::Verify,
        Cmd::DataPrepare => Command::DataPrepare,
    };
    commands::run(command, &cfg, cli.jobs)
}
