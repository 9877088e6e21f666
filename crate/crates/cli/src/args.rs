use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "effcap", version, about = "Effective bandwidth, effective capacity and QoS-constrained throughput")]
pub struct Cli {
    /// Seed for randomized computations (required by `--method mc` and `simulate`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write data files and a run manifest here instead of printing to stdout.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Output format for tabular data.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// JSON parameter file (or a run manifest). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Effective capacity evaluation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Closed form for i.i.d. blocks, deterministic quadrature otherwise.
    #[value(alias = "closed-iid")]
    #[serde(alias = "closed-iid")]
    Closed,
    /// Seeded Monte Carlo.
    Mc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective bandwidth of a source over a theta grid.
    Ebw(EbwArgs),
    /// Effective capacity of a channel over a (theta, SNR) grid.
    Ecap(EcapArgs),
    /// Maximum average arrival rate over a (theta, SNR) grid.
    Throughput(ThroughputArgs),
    /// Energy-per-bit curve and low-SNR metrics at one theta.
    Energy(EnergyArgs),
    /// Queue simulation with empirical tail fits.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ebw(_) => "ebw",
            Command::Ecap(_) => "ecap",
            Command::Throughput(_) => "throughput",
            Command::Energy(_) => "energy",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Args)]
pub struct SourceArg {
    /// Source as inline JSON (`{"kind": ...}`) or a path to a JSON file.
    #[arg(long)]
    pub source: Option<String>,
}

#[derive(Debug, Args)]
pub struct ChannelArg {
    /// Channel as inline JSON (`{"m": 10, "rho": 0}`) or a path to a JSON file.
    #[arg(long)]
    pub channel: Option<String>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Fading blocks per Monte Carlo estimate.
    #[arg(long)]
    pub n_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EbwArgs {
    #[command(flatten)]
    pub source: SourceArg,
    /// QoS exponents, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EcapArgs {
    #[command(flatten)]
    pub channel: ChannelArg,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// SNR values in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    #[command(flatten)]
    pub capacity: CapacityArgs,
}

#[derive(Debug, Args)]
pub struct ThroughputArgs {
    #[command(flatten)]
    pub source: SourceArg,
    #[command(flatten)]
    pub channel: ChannelArg,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    #[command(flatten)]
    pub capacity: CapacityArgs,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub source: SourceArg,
    #[command(flatten)]
    pub channel: ChannelArg,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArg,
    #[command(flatten)]
    pub channel: ChannelArg,
    /// SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Target QoS exponent. When given, the source peak rate is replaced by
    /// the largest one the channel supports at this exponent.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub n_blocks: Option<usize>,
    /// Backlog thresholds in bits, comma separated (chosen from the run if omitted).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q_thresholds: Option<Vec<f64>>,
    /// Delay thresholds in blocks, comma separated (chosen from the run if omitted).
    #[arg(long, value_delimiter = ',')]
    pub d_thresholds: Option<Vec<u64>>,
}
