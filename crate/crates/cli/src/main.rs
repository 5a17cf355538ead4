//! Batch front end: synthesize data, train per-season checkpoints, evaluate
//! against baselines, emit forecasts, and run gradient checks.
//!
//! Exit codes are a stable scripting contract: 0 ok, 2 I/O, 3 data, 4 spec,
//! 5 training, 6 checkpoint, 7 gradient-check failure, 1 internal.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pricecast_core::Error;

#[derive(Parser)]
#[command(
    name = "pricecast",
    version,
    about = "Hourly electricity price forecasting: train seasonal models and evaluate them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic hourly price CSV.
    Synth {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// First hour, `YYYY-MM-DD` or `YYYY-MM-DDTHH:00:00Z`.
        #[arg(long, default_value = "2015-01-01")]
        start: String,
        /// Number of hourly records (0 writes a header-only file).
        #[arg(long, default_value_t = 26280)]
        hours: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train one checkpoint per requested season.
    Train {
        /// Input price CSV.
        #[arg(long)]
        data: PathBuf,
        /// Optional `key = value` config file; defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Architecture to train: cnn | bp.
        #[arg(long)]
        model: String,
        /// all | spring | summer | fall | winter.
        #[arg(long, default_value = "all")]
        season: String,
        /// Output directory for checkpoints and training histories.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate checkpoints (plus baselines) into a seasonal report CSV.
    Evaluate {
        /// Input price CSV.
        #[arg(long)]
        data: PathBuf,
        /// Directory holding `<model>_<season>.ckpt` files.
        #[arg(long)]
        checkpoints: PathBuf,
        /// Comma-separated subset of: persistence, bp.
        #[arg(long, default_value = "persistence,bp")]
        baselines: String,
        /// Optional config file; supplies the train/test period bounds.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output report CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// One-step-ahead forecasts from a checkpoint over a time range.
    Forecast {
        /// Input price CSV.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint file to load.
        #[arg(long)]
        checkpoint: PathBuf,
        /// First forecast hour, `YYYY-MM-DD` or `YYYY-MM-DDTHH:00:00Z`.
        #[arg(long)]
        start: String,
        /// Number of hours to forecast.
        #[arg(long, default_value_t = 168)]
        hours: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of a random model's gradients.
    Gradcheck {
        /// Architecture to check: cnn | bp.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 2,
        Error::Parse { .. } | Error::Data(_) | Error::Metric(_) => 3,
        Error::Spec(_) | Error::Shape(_) | Error::Argument(_) => 4,
        Error::Training(_) => 5,
        Error::Checkpoint(_) => 6,
        Error::Internal(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
