//! `hashslice`: batch commands that wire the auditing toolkit into a
//! reproducible pipeline. Commands compose in order:
//!
//!   simulate -> enumerate -> calibrate -> assign -> validate
//!
//! with `scan-positions`, `normalize-text`, and `report` alongside.
//! Exit codes: 0 success, 1 validation failure, 2 usage/config error.

mod commands;
mod config;
mod paths;

use clap::{Parser, Subcommand};
use commands::{Ctx, ThresholdOverrides};
use config::Config;
use hashslice_core::error::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hashslice", version, about = "Pseudonymity auditing for hash-slice username schemes")]
struct Cli {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: run.out_dir from the config, or ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads (default: run.workers, or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Random seed (default: run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic forum dump plus hidden ground truth.
    Simulate,
    /// Brute-force candidate addresses for every topic in the dump.
    Enumerate {
        /// Slice positions to extract (default: regime slices and their
        /// shifted noise positions).
        #[arg(long, value_delimiter = ',')]
        positions: Option<Vec<usize>>,
    },
    /// Derive p-value thresholds from the shifted noise position.
    Calibrate,
    /// Assign posts to addresses using calibrated thresholds.
    Assign {
        /// Override the 7-day threshold (probability, not log).
        #[arg(long)]
        p7: Option<f64>,
        /// Override the 31-day threshold.
        #[arg(long)]
        p31: Option<f64>,
        /// Override the 91-day threshold.
        #[arg(long)]
        p91: Option<f64>,
        /// Run at the shifted noise position instead of the regime slices.
        #[arg(long)]
        noise: bool,
    },
    /// Weekly mean minimal p-values per slice position, with switch
    /// detection.
    #[command(name = "scan-positions")]
    ScanPositions {
        #[arg(long, value_delimiter = ',')]
        positions: Option<Vec<usize>>,
    },
    /// Bogon exclusion and (when ground truth exists) precision/recall.
    Validate,
    /// Deobfuscate a text corpus.
    #[command(name = "normalize-text")]
    NormalizeText {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Concentration, rank fit, labels, and time profiles from
    /// assignments.
    Report,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    });
}

fn exit_code_for(_err: &Error) -> i32 {
    // Usage, configuration, and data-integrity problems all mean the
    // invocation cannot proceed; validation failures return 1 in-band.
    2
}

fn run(cli: Cli) -> Result<i32, Error> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let ctx = Ctx::new(config, cli.out_dir, cli.workers, cli.seed)?;
    match cli.command {
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Enumerate { positions } => commands::enumerate(&ctx, positions)?,
        Command::Calibrate => commands::calibrate(&ctx)?,
        Command::Assign { p7, p31, p91, noise } => {
            commands::assign(&ctx, &ThresholdOverrides { p7, p31, p91 }, noise)?
        }
        Command::ScanPositions { positions } => commands::scan_positions(&ctx, positions)?,
        Command::Validate => return commands::validate(&ctx),
        Command::NormalizeText { input, output } => {
            commands::normalize_text(&ctx, &input, &output)?
        }
        Command::Report => commands::report(&ctx)?,
    }
    Ok(0)
}
