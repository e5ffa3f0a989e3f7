//! The `mrs` command-line tool.
//!
//! Every command reads the project configuration, works inside the output
//! directory and stamps its artifacts with the configuration hash and seed.
//! Exit codes: 0 on success, 2 for input or argument errors, 3 for
//! numerical and fitting failures.

mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::MrsError;

pub use config::{LoadedConfig, ProjectConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mrs",
    version,
    about = "Regime-switching electricity spot model: calibration and pricing"
)]
pub struct Cli {
    /// Project configuration file.
    #[arg(long, global = true, default_value = "mrs.toml")]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit trend and weekly pattern; write the deseasonalised series.
    FitSeasonal,
    /// Calibrate the regime-switching model by EM and test its fit.
    Calibrate {
        /// Bootstrap replications for the goodness-of-fit p-values.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Fit the market price of risk to the forward quotes.
    FitLambda {
        /// Report premia as forward minus expected spot.
        #[arg(long)]
        negate_rp: bool,
    },
    /// Price a contract under the fitted market price of risk.
    Price(PriceArgs),
    /// Simulate price paths from the valuation date.
    Simulate {
        /// Days to simulate.
        #[arg(long)]
        horizon: u32,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long, value_enum, default_value_t = Measure::Actual)]
        measure: Measure,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    Actual,
    Pricing,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Also run a Monte Carlo check with this many paths.
    #[arg(long, global = true)]
    pub mc: Option<usize>,
    /// Price surface `K0:K1:dK,T0:T1:dT` written to the output directory.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    #[command(subcommand)]
    pub contract: Contract,
}

/// Times accept a day offset from the valuation date or an ISO date.
#[derive(Debug, Subcommand)]
pub enum Contract {
    /// European call on the spot price.
    SpotOption {
        #[arg(long, allow_hyphen_values = true)]
        strike: Option<f64>,
        #[arg(long)]
        maturity: Option<String>,
    },
    /// Forward price for a delivery time or a delivery window.
    Forward {
        #[arg(long, conflicts_with_all = ["window_start", "window_end"])]
        delivery: Option<String>,
        #[command(flatten)]
        window: Option<WindowArgs>,
    },
    /// European call on a delivery-window forward.
    ForwardOption {
        #[arg(long, allow_hyphen_values = true)]
        strike: Option<f64>,
        /// Defaults to the fourth business day before the window starts.
        #[arg(long)]
        expiry: Option<String>,
        #[command(flatten)]
        window: WindowArgs,
        /// Analytic inner forward is the default; this nests a simulation.
        #[arg(long)]
        nested: Option<usize>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// First delivery day.
    #[arg(long)]
    pub window_start: String,
    /// Last delivery day.
    #[arg(long)]
    pub window_end: String,
    #[arg(long, default_value = "at_maturity")]
    pub settlement: String,
    /// Integrate through the end of the last day instead of summing days.
    #[arg(long)]
    pub continuous: bool,
}

/// Process exit code for an error.
pub fn exit_code(e: &MrsError) -> i32 {
    match e {
        MrsError::Argument(_) | MrsError::Parse { .. } | MrsError::Io(_) => 2,
        MrsError::Fit { .. } | MrsError::Calibration(_) | MrsError::Internal(_) => 3,
    }
}

/// Parse arguments, run, and return the exit code. Output goes to stdout,
/// diagnostics to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match commands::run(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub use commands::run;
