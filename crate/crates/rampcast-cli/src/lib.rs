//! Single command-line entry point for the ramp-forecasting pipeline:
//! ingest → label → train → evaluate → report, plus synthetic-data
//! generation and single-day forecasts.
//!
//! All behavior is driven by one TOML config file; flags only override
//! config keys. Exit codes: 0 success, 1 internal/numerical failure,
//! 2 user/config error.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use rampcast_core::features::TargetKind;
use rampcast_core::neural::CellKind;
use rampcast_core::{Error, ErrorClass, Result};

use config::RunConfig;

/// The only environment override: the output directory.
pub const OUT_DIR_ENV: &str = "RAMPCAST_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "rampcast",
    version,
    about = "Day-ahead forecasts of the primary three-hour net-load ramp"
)]
struct Cli {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Override the configured output directory (also: RAMPCAST_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read the raw CSVs (or synthesize) into one aligned frame file.
    Ingest {
        /// Generate the frame with the built-in duck-curve synthesizer.
        #[arg(long)]
        synthetic: bool,
        /// Days to synthesize (with --synthetic; default from config).
        #[arg(long, value_name = "N")]
        days: Option<usize>,
    },
    /// Extract each complete day's primary three-hour ramp into labels.
    Label,
    /// Train one network and write its checkpoint.
    Train {
        /// Forecast target: "magnitude" or "start_time".
        #[arg(long, value_name = "TARGET")]
        target: String,
        /// Cell kind: "lstm" (default), "gru", or "srn".
        #[arg(long, value_name = "CELL")]
        cell: Option<String>,
    },
    /// Score PM, GRU, SRN, and NPM on the test split and write the report.
    Evaluate,
    /// Forecast a single day from the proposed model's checkpoints.
    Forecast {
        /// Forecast day, YYYY-MM-DD.
        #[arg(long, value_name = "DATE")]
        date: String,
    },
    /// Generate a synthetic duck-curve frame.
    Synth {
        /// Days to synthesize (default from config).
        #[arg(long, value_name = "N")]
        days: Option<usize>,
    },
}

/// Parse arguments, run the requested command, and map errors to exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init()
        .ok();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::User => 2,
                ErrorClass::Internal => 1,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    } else if let Ok(out) = std::env::var(OUT_DIR_ENV) {
        if !out.is_empty() {
            config.out_dir = PathBuf::from(out);
        }
    }

    match cli.command {
        Command::Ingest { synthetic, days } => commands::cmd_ingest(&config, synthetic, days),
        Command::Label => commands::cmd_label(&config),
        Command::Train { target, cell } => {
            let target = TargetKind::parse(&target)?;
            let cell = cell.as_deref().map(CellKind::parse).transpose()?;
            commands::cmd_train(&config, target, cell)
        }
        Command::Evaluate => commands::cmd_evaluate(&config),
        Command::Forecast { date } => {
            let date: NaiveDate = date
                .parse()
                .map_err(|_| Error::Argument(format!("'{date}' is not a YYYY-MM-DD date")))?;
            commands::cmd_forecast(&config, date)
        }
        Command::Synth { days } => commands::cmd_synth(&config, days),
    }
}
