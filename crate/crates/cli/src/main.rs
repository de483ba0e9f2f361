//! Command-line front end: `simulate` writes histograms, `analyze` fits
//! them, `sweep` does both across a ladder of instrument settings.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pairflim_core::SweepAxis;

mod analyze;
mod errors;
mod manifest;
mod simulate;
mod sweep;

#[derive(Parser)]
#[command(
    name = "pairflim",
    version,
    about = "Simulate and analyze photon-pair fluorescence-lifetime measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a measurement and write per-repeat histogram CSVs plus a manifest
    Simulate(SimulateArgs),
    /// Fit the histograms in a directory and write a JSON report
    Analyze(AnalyzeArgs),
    /// Run simulate-and-analyze cycles across a ladder of one setting
    Sweep(SweepArgs),
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    /// TOML config file; defaults apply for anything omitted
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override the config's RNG seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Directory to write histograms and the manifest into
    #[arg(long)]
    pub out: PathBuf,

    /// Override the integration time per repeat, in seconds
    #[arg(long = "integration-time")]
    pub integration_time: Option<f64>,

    /// Override the number of repeats per mode
    #[arg(long)]
    pub repeats: Option<u32>,

    /// Override the ND filter optical density in the herald arm (channel 1)
    #[arg(long)]
    pub od: Option<f64>,

    /// Override the waveguide temperature, in degrees C
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(clap::Args)]
pub struct AnalyzeArgs {
    /// Directory holding histogram CSVs with their .meta.toml sidecars
    pub in_dir: PathBuf,

    /// TOML config file; only its [pipeline] section matters here
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Where to write the JSON report (default: <in_dir>/report.json)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Record the solver's parameter trajectory in the report
    #[arg(long)]
    pub dump_solver_trace: bool,
}

#[derive(clap::Args)]
pub struct SweepArgs {
    /// Which instrument setting to sweep
    #[arg(long, value_enum)]
    pub axis: AxisArg,

    /// Comma-separated setting values (default: the axis's standard ladder)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub values: Option<Vec<f64>>,

    /// Independent seeded cycles per value (default depends on the axis)
    #[arg(long)]
    pub repeats: Option<u32>,

    /// TOML config file giving the base configuration
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Base seed; per-cycle seeds derive from it and the setting value
    #[arg(long)]
    pub seed: Option<u64>,

    /// Directory to write the sweep tables into
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AxisArg {
    IntegrationTime,
    OpticalDensity,
    Temperature,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::IntegrationTime => SweepAxis::IntegrationTime,
            AxisArg::OpticalDensity => SweepAxis::OpticalDensity,
            AxisArg::Temperature => SweepAxis::Temperature,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate::cmd_simulate(args),
        Command::Analyze(args) => analyze::cmd_analyze(args),
        Command::Sweep(args) => sweep::cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}
