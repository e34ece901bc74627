mod commands;
mod error;
mod manifest;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glassrisk::parallel::Execution;
use glassrisk::solvers::UpdateOrder;
use glassrisk::{ReturnMode, SamplingScheme};
use serde::{Deserialize, Serialize};

use crate::source::DEFAULT_SYNTH;

/// Portfolio risk minimization through the random-field Ising mapping.
#[derive(Debug, Parser)]
#[command(name = "glassrisk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Critical margin of a price universe and the convexity verdict at --gamma.
    GammaC(GammaCArgs),
    /// Minimum-risk spin configuration and positions for given expected returns.
    Optimize(OptimizeArgs),
    /// Relative risk of TAP and the local-field baseline over margin ratios.
    Sweep(SweepArgs),
    /// Critical margin against portfolio size with a power-law fit.
    Scaling(ScalingArgs),
    /// Write a synthetic price file.
    Synth(SynthArgs),
    /// Histogram of pairwise Pearson correlations.
    Correlations(CorrelationArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path (defaults to <out>.manifest.json, or stderr).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Price CSV path or synthetic spec such as synth:factor:n=395,T=2500.
    #[arg(long, default_value = DEFAULT_SYNTH)]
    pub prices: String,
    #[arg(long, default_value = "eod1", value_parser = parse_scheme)]
    pub scheme: SamplingScheme,
    #[arg(long, value_enum, default_value_t = ReturnModeArg::Log)]
    pub return_mode: ReturnModeArg,
    /// Shrinkage intensity toward a scaled identity, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub shrinkage: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GammaCArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Select this many assets at random (all when absent).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Margin at which to evaluate the Hessian and the verdict.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Expected returns: comma-separated values or a file of numbers.
    #[arg(long)]
    pub returns: String,
    /// Absolute margin requirement.
    #[arg(long, conflicts_with = "gamma_ratio", required_unless_present = "gamma_ratio", allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Margin as a multiple of the critical margin.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma_ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = SolverArg::Tap)]
    pub solver: SolverArg,
    #[arg(long, value_enum, default_value_t = StartArg::Random)]
    pub start: StartArg,
    #[arg(long, value_enum, default_value_t = OrderArg::Random)]
    pub order: OrderArg,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.5,3,10")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 128)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OrderArg::Random)]
    pub order: OrderArg,
    #[arg(long, value_enum, default_value_t = ExecutionArg::Parallel)]
    pub execution: ExecutionArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ExecutionArg::Parallel)]
    pub execution: ExecutionArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    /// Number of observations (rows).
    #[arg(long = "observations", short = 'T')]
    pub observations: usize,
    /// factor:<count> or uniform:<rho>.
    #[arg(long, default_value = "factor:3", allow_hyphen_values = true)]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorrelationArgs {
    #[arg(long, default_value = DEFAULT_SYNTH)]
    pub prices: String,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = ReturnModeArg::Price)]
    pub return_mode: ReturnModeArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest_path: PathBuf,
    /// Write the output here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnModeArg {
    Log,
    Simple,
    Price,
}

impl From<ReturnModeArg> for ReturnMode {
    fn from(m: ReturnModeArg) -> Self {
        match m {
            ReturnModeArg::Log => ReturnMode::Log,
            ReturnModeArg::Simple => ReturnMode::Simple,
            ReturnModeArg::Price => ReturnMode::RawPrice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverArg {
    Tap,
    Exhaustive,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartArg {
    Random,
    Baseline,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderArg {
    Sequential,
    Random,
}

impl From<OrderArg> for UpdateOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Sequential => UpdateOrder::Sequential,
            OrderArg::Random => UpdateOrder::RandomPermutation,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionArg {
    Serial,
    Parallel,
}

impl From<ExecutionArg> for Execution {
    fn from(e: ExecutionArg) -> Self {
        match e {
            ExecutionArg::Serial => Execution::Serial,
            ExecutionArg::Parallel => Execution::Parallel,
        }
    }
}

fn parse_scheme(s: &str) -> Result<SamplingScheme, String> {
    s.parse().map_err(|e: glassrisk::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

