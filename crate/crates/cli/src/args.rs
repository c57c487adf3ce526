use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const STRATEGY_NAMES: [&str; 4] = ["coordinated-optimal", "coordinated-fdma", "uncoordinated-optimal", "aloha-fdma"];
pub const CASE_NAMES: [&str; 3] = ["1tx", "4tx", "8tx"];

const OUTAGE_COLUMNS: &str = "\
CSV columns:
  lambda      new arrivals per second (only with several arrival rates)
  rate_bpshz  common rate R, bps/Hz
  strategy    access strategy name
  case        retransmission case (1tx, 4tx, 8tx; none for coordinated)
  outage      per-attempt outage at the fixed-point attempt rate
  stderr      Monte Carlo standard error of outage";

const THROUGHPUT_COLUMNS: &str = "\
CSV columns:
  lambda           new arrivals per second (only with several arrival rates)
  rate_bpshz       common rate R, bps/Hz
  strategy         access strategy name
  case             retransmission case (1tx, 4tx, 8tx; none for coordinated)
  outage           per-attempt outage
  failure          packet failure probability after retransmissions
  attempt_rate     aggregate attempt rate x, per second
  throughput_bpshz lambda R (1 - failure), bps/Hz";

const MAX_THROUGHPUT_COLUMNS: &str = "\
CSV columns:
  lambda         new arrivals per second
  strategy       access strategy name
  case           retransmission case (1tx, 4tx, 8tx; none for coordinated)
  R_star         throughput-maximizing rate meeting the constraint, bps/Hz (0 if none does)
  S_star         throughput at R_star, bps/Hz (0 if no rate meets the constraint)
  outage_at_opt  per-attempt outage at R_star (empty if no rate meets the constraint)";

const PROTOCOL_COLUMNS: &str = "\
CSV columns:
  payload_bits  payload size L, bits
  protocol      one-stage-optimal, one-stage-aloha, two-stage-coordinated-optimal or two-stage-coordinated-fdma
  lambda_star   largest supportable arrival rate, per second (0 if none)";

const DELTA_COLUMNS: &str = "\
CSV columns:
  minislots       M, minislots per slot
  max_attempts    Z, attempts including the first
  backoff_window  T_w, backoff window in minislots
  epsilon         per-attempt outage fed to the simulator
  delta           closed-form failure probability
  delta_hat       simulated failure fraction
  stderr          binomial standard error of delta_hat around delta
  packets         packets counted by the simulator
  within_3sigma   true when |delta_hat - delta| <= 3 stderr";

/// Throughput experiments for coordinated and uncoordinated uplink access.
#[derive(Debug, Parser)]
#[command(name = "m2m-access", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-attempt outage versus common rate.
    #[command(after_help = OUTAGE_COLUMNS)]
    OutageVsRate(RateArgs),
    /// Throughput versus common rate.
    #[command(after_help = THROUGHPUT_COLUMNS)]
    ThroughputVsRate(RateArgs),
    /// Outage-constrained maximum throughput versus arrival rate.
    #[command(after_help = MAX_THROUGHPUT_COLUMNS)]
    MaxThroughputVsLambda(LambdaArgs),
    /// Largest supportable arrival rate versus payload, one-stage against two-stage.
    #[command(after_help = PROTOCOL_COLUMNS)]
    ProtocolCapacity(ProtocolArgs),
    /// Simulated failure probability against the closed form over a (M, Z, T_w, epsilon) grid.
    #[command(after_help = DELTA_COLUMNS)]
    ValidateDelta(DeltaArgs),
}

#[derive(Debug, Default, Clone, Args)]
pub struct CommonArgs {
    /// Flat key = value scenario file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo samples per estimate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Lognormal shadowing spread, dB.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_db: Option<f64>,
    /// Reference SNR, dB.
    #[arg(long, allow_negative_numbers = true)]
    pub mu_db: Option<f64>,
    #[arg(long)]
    pub pathloss_exponent: Option<f64>,
    /// Largest admissible packet failure probability.
    #[arg(long)]
    pub constraint: Option<f64>,
    /// Output CSV path; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args)]
pub struct SelectionArgs {
    #[arg(long, value_delimiter = ',', value_parser = STRATEGY_NAMES)]
    pub strategy: Vec<String>,
    /// Retransmission case for uncoordinated strategies.
    #[arg(long, value_delimiter = ',', value_parser = CASE_NAMES)]
    pub case: Vec<String>,
}

#[derive(Debug, Default, Clone, Args)]
pub struct LambdaGridArgs {
    /// Explicit arrival rates, per second.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    /// Smallest arrival rate as a power of two.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_log2_min: Option<i32>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_log2_max: Option<i32>,
    #[arg(long)]
    pub per_octave: Option<usize>,
}

#[derive(Debug, Default, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub lambdas: LambdaGridArgs,
    #[arg(long)]
    pub rate_min: Option<f64>,
    #[arg(long)]
    pub rate_max: Option<f64>,
    #[arg(long)]
    pub rate_points: Option<usize>,
}

#[derive(Debug, Default, Clone, Args)]
pub struct LambdaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub lambdas: LambdaGridArgs,
}

#[derive(Debug, Default, Clone, Args)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub lambdas: LambdaGridArgs,
    #[arg(long)]
    pub payload_min: Option<f64>,
    #[arg(long)]
    pub payload_max: Option<f64>,
    #[arg(long)]
    pub payload_points: Option<usize>,
    /// Retransmission case of the one-stage uncoordinated-optimal uplink.
    #[arg(long, value_parser = CASE_NAMES)]
    pub optimal_case: Option<String>,
    /// Retransmission case of every aloha-FDMA stage.
    #[arg(long, value_parser = CASE_NAMES)]
    pub aloha_case: Option<String>,
}

#[derive(Debug, Default, Clone, Args)]
pub struct DeltaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    pub minislots: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub max_attempts: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub backoff_window: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    /// Minimum packets counted per cell.
    #[arg(long)]
    pub packets: Option<u64>,
}
