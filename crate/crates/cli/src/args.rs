use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use htf_core::feedback::Topology;
use htf_core::vecfit::Weighting;
use htf_core::ResponseKind;

use crate::config::{parse_list, parse_range};

#[derive(Debug, Parser)]
#[command(name = "htfstab", version, about = "Stability analysis of periodically driven systems through harmonic transfer functions")]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the exact sideband responses of a PLTV system file.
    OracleGen(OracleGenArgs),
    /// Fit the truncated central column of the HTF to sideband data.
    Identify(IdentifyArgs),
    /// Closed-loop pole locus of an identified HTF over resistor values.
    Sweep(SweepArgs),
    /// Closed-loop pole locus re-solved exactly per resistor value.
    OracleSweep(OracleSweepArgs),
    /// Render one or more locus CSV files as an SVG pole diagram.
    Plot(PlotArgs),
    /// Time the HTF path against the conventional path.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Pump frequency in Hz; defaults to the system's own.
    #[arg(long, value_name = "HZ")]
    pub f0: Option<f64>,
    /// Analysis band `lo:hi` in Hz.
    #[arg(long, value_name = "LO:HI", value_parser = parse_range_arg)]
    pub band: Option<(f64, f64)>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Number of sidebands on each side of the carrier.
    #[arg(long)]
    pub nh: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleGenArgs {
    pub system: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Harmonic truncation of the oracle operator; defaults to 2·NH+2.
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long, short = 'o', value_name = "CSV")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub order_min: Option<usize>,
    #[arg(long)]
    pub order_max: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Relative weighted RMS a fit must reach.
    #[arg(long)]
    pub rms_tol: Option<f64>,
    #[arg(long, value_parser = parse_weighting)]
    pub weighting: Option<Weighting>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    pub responses: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Relaxes the truncation test to |H±k| < margin·|H0|; at least 1.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Highest sideband examined by the truncation rule.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Force the truncation order instead of selecting it.
    #[arg(long)]
    pub n: Option<usize>,
    /// Expected sideband count of the response file.
    #[arg(long)]
    pub nh: Option<usize>,
    /// Pump frequency in Hz when the file does not record it.
    #[arg(long, value_name = "HZ")]
    pub f0: Option<f64>,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<ResponseKind>,
    /// Manifest path; the column model is written next to it.
    #[arg(long, short = 'o', value_name = "JSON")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    #[arg(long, value_parser = parse_topology)]
    pub topology: Option<Topology>,
    /// Comma-separated resistor values in ohms.
    #[arg(long, value_parser = parse_values)]
    pub values: Option<Values>,
    /// Reporting band `lo:hi` in Hz for pole magnitudes |Im(s)|/2π.
    #[arg(long, value_name = "LO:HI", value_parser = parse_range_arg)]
    pub band: Option<(f64, f64)>,
    /// Stability margin on the real part, in 1/s.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Relative modal weight below which closed-loop modes are dropped.
    #[arg(long)]
    pub cancellation_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Values(pub Vec<f64>);

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub feedback: FeedbackArgs,
    #[arg(long, short = 'o', value_name = "CSV")]
    pub output: PathBuf,
    /// Stability report path; defaults to the CSV path with a `.report.json` suffix.
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleSweepArgs {
    pub system: PathBuf,
    #[command(flatten)]
    pub feedback: FeedbackArgs,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long, short = 'o', value_name = "CSV")]
    pub output: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Locus from the HTF path, drawn with crosses.
    #[arg(long, value_name = "CSV")]
    pub htf: Vec<PathBuf>,
    /// Locus from the oracle path, drawn with squares.
    #[arg(long, value_name = "CSV")]
    pub oracle: Vec<PathBuf>,
    #[arg(long, short = 'o', value_name = "SVG")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub system: PathBuf,
    /// Comma-separated numbers of resistor values.
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: Option<Sizes>,
    /// Each timing is the minimum over this many runs.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Resistor range `lo:hi` spread linearly over each size.
    #[arg(long, value_name = "LO:HI", value_parser = parse_range_arg)]
    pub values: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_topology)]
    pub topology: Option<Topology>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, short = 'o', value_name = "CSV")]
    pub output: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Sizes(pub Vec<usize>);

fn parse_range_arg(s: &str) -> Result<(f64, f64), String> {
    parse_range(s).map_err(|e| e.to_string())
}

fn parse_values(s: &str) -> Result<Values, String> {
    parse_list(s).map(Values).map_err(|e| e.to_string())
}

fn parse_sizes(s: &str) -> Result<Sizes, String> {
    parse_list(s).map(Sizes).map_err(|e| e.to_string())
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse().map_err(|e: htf_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<ResponseKind, String> {
    s.parse().map_err(|e: htf_core::Error| e.to_string())
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    match s {
        "uniform" => Ok(Weighting::Uniform),
        "inverse-magnitude" | "inverse_magnitude" => Ok(Weighting::InverseMagnitude),
        _ => Err(format!("unknown weighting '{s}' (uniform|inverse-magnitude)")),
    }
}
