//! `twinbeam`: simulate twin-beam runs, estimate NRF and Fano factors,
//! herald sub-Poissonian states and fit the NRF line.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use failure::{CmdResult, Failure};

/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "TWINBEAM_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "twinbeam",
    version,
    about = "Twin-beam simulation and heralded sub-Poissonian light analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output path: the dataset for `simulate`, the report otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Seed for simulation and bootstrap; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// No progress messages and no report echo on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one run and save it as a dataset file.
    Simulate {
        #[arg(long, value_enum, default_value_t = Kind::TwinBeam)]
        kind: Kind,
        /// Overrides `n_pulses` of the config.
        #[arg(long)]
        pulses: Option<usize>,
    },
    /// NRF and Fano factors from twin-beam, coherent and dark dataset files.
    Analyze {
        /// Dataset files; their kinds are read from the file headers.
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Bootstrap resamples (default from config, else 1000).
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Heralded Fano factor of the target channel.
    Condition {
        dataset: PathBuf,
        /// Dark run for the target detector's noise subtraction.
        #[arg(long)]
        dark: Option<PathBuf>,
        /// Window parameter Q (repeatable). Default: the config's conditioning list, else Q = 20.
        #[arg(long = "q")]
        q: Vec<f64>,
        /// Window center as control mean + δ·SD.
        #[arg(long, conflicts_with = "level")]
        offset_sd: Option<f64>,
        /// Window center at an absolute control reading.
        #[arg(long)]
        level: Option<f64>,
        /// Control channel (1 or 2).
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        control: u8,
        /// Bootstrap resamples (default from config, else 1000).
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Pump-power sweep with NRF, Fano and heralding tables.
    Sweep,
    /// Weighted NRF line fit on a sweep table.
    Fit {
        /// CSV with columns n_mode, nrf, nrf_se and optionally k.
        points: PathBuf,
        /// Reading ratio k for the efficiency estimate (default: mean of the k column).
        #[arg(long)]
        k_ratio: Option<f64>,
    },
    /// Convert a saved report.
    Report { report: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    #[value(name = "twin_beam", alias = "twin-beam")]
    TwinBeam,
    Coherent,
    Dark,
}

fn worker_cap() -> CmdResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => {
                let mut f = Failure::new(
                    failure::EXIT_CONFIG,
                    "invalid_parameter",
                    format!("{THREADS_ENV} must be a positive integer, got `{v}`"),
                );
                f.field = Some(THREADS_ENV.to_string());
                Err(f)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = worker_cap().and_then(|cap| match cap {
        Some(n) => twinbeam::model::with_workers(n, || commands::run(&cli)),
        None => commands::run(&cli),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code)
        }
    }
}
