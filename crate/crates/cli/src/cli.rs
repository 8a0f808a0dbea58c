use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use condflow::meander::Sampler;
use condflow::sde::Monitoring;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "condflow",
    version,
    about = "Conditioned Brownian motion, meanders and coalescing-flow clusters",
    args_override_self = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
#[command(next_help_heading = "Global options")]
pub struct GlobalArgs {
    /// Master seed; path i of an ensemble uses stream i
    #[arg(long, global = true, env = "CONDFLOW_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Data output file (stdout when absent)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Summary output file for csv runs (stderr when absent)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub summary: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// File of key=value lines mirroring the long flags
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exit probability γ_G(t, y) and its log-gradient
    Gamma(GammaArgs),
    /// Brownian meander ensembles
    Meander(MeanderArgs),
    /// Boundaries of the cluster of a point in the Arratia flow
    Cluster(ClusterArgs),
    /// Coalescing flow from a set of points, with cluster census
    Flow(FlowArgs),
    /// Flows with a contracting drift: stationary point and its cluster
    Drifted(DriftedArgs),
    /// Run the acceptance suite
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gamma(_) => "gamma",
            Command::Meander(_) => "meander",
            Command::Cluster(_) => "cluster",
            Command::Flow(_) => "flow",
            Command::Drifted(_) => "drifted",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Halfline,
    Interval,
    Halfspace,
    Box,
    Wedge2,
}

#[derive(Debug, Args, Serialize)]
pub struct GammaArgs {
    #[arg(long, value_enum)]
    pub domain: DomainKind,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// Point, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub y: Vec<f64>,
    /// Half-line origin
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub origin: f64,
    /// Half-line direction, +1 or -1
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub direction: f64,
    /// Interval left end
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub a: f64,
    /// Interval right end
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub b: f64,
    /// Half-space anchor point, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub anchor: Vec<f64>,
    /// Half-space unit normal, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub normal: Vec<f64>,
    /// Box factors: halfline:ORIGIN:DIR, interval:A:B or line, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub factors: Vec<String>,
}

/// Time grid used by the SDE samplers.
#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Uniform steps between the refined ends
    #[arg(long, default_value_t = 1000)]
    pub n_uniform: usize,
    /// Start offset ε₀ of the SDE grid [default: 1e-3·T]
    #[arg(long)]
    pub eps0: Option<f64>,
    /// End offset ε₁ of the SDE grid
    #[arg(long, default_value_t = 1e-6)]
    pub eps1: f64,
    /// Halvings of the step toward each offset end
    #[arg(long, default_value_t = 10)]
    pub refine_levels: u32,
    /// Recorded points: all, end, or a comma separated list of times
    #[arg(long, default_value = "end")]
    pub record: String,
}

#[derive(Debug, Args, Serialize)]
pub struct MeanderArgs {
    /// Sampler: sde, bessel (Imhof-weighted) or rejection
    #[arg(long, value_parser = parse_sampler, default_value = "sde")]
    pub method: Sampler,
    /// Horizon T
    #[arg(long = "T", default_value_t = 1.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Number of paths
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Rejection start [default: 1e-3·√T]
    #[arg(long)]
    pub y0: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rejection: RejectionArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RejectionArgs {
    /// Between-grid meeting test of the rejection samplers: bridge or grid
    #[arg(long, value_parser = parse_monitoring, default_value = "bridge")]
    pub monitoring: Monitoring,
    /// Attempts per accepted path
    #[arg(long, default_value_t = 1_000_000_000)]
    pub max_attempts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMethod {
    Sde,
    Oracle,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long, value_enum, default_value_t = PairMethod::Sde)]
    pub mode: PairMethod,
    /// Vertex the boundaries start from
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Half distance of the oracle's starting pair
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rejection: RejectionArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FlowArgs {
    /// Initial points: START:END:STEP or a comma separated list
    #[arg(long, allow_hyphen_values = true)]
    pub points: String,
    #[arg(long = "T", default_value_t = 1.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    /// Drift expression in x (none when absent)
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub drift: DriftConstants,
    /// Window [a, b] for the cluster count, comma separated [default: all points]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub window: Vec<f64>,
    /// Recorded states: all or end
    #[arg(long, default_value = "end")]
    pub record: String,
}

/// Overrides for the constants estimated from a drift expression.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DriftConstants {
    /// Monotonicity constant λ in (a(x)-a(y))(x-y) ≤ -λ(x-y)²
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Lipschitz constant of the drift
    #[arg(long)]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftedMode {
    Stationary,
    InfiniteCluster,
}

#[derive(Debug, Args, Serialize)]
pub struct DriftedArgs {
    /// Drift expression in x
    #[arg(long, default_value = "-x", allow_hyphen_values = true)]
    pub a: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub drift: DriftConstants,
    #[arg(long, value_enum, default_value_t = DriftedMode::Stationary)]
    pub mode: DriftedMode,
    /// Stationary mode: time the particles start before 0
    #[arg(long, default_value_t = 10.0)]
    pub lookback: f64,
    /// Stationary mode: half width of the initial particle row
    #[arg(long, default_value_t = 5.0)]
    pub span: f64,
    /// Stationary mode: particles per run
    #[arg(long, default_value_t = 200)]
    pub particles: usize,
    /// Stationary mode: flow time step
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    /// Stationary mode: independent runs
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Infinite-cluster mode: sde or oracle
    #[arg(long, value_enum, default_value_t = PairMethod::Sde)]
    pub method: PairMethod,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Infinite-cluster mode: number of pairs
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Oracle: time simulated past T to confirm the pair separates
    #[arg(long, default_value_t = 8.0)]
    pub extension: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub extension_dt: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rejection: RejectionArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Mutation {
    ImhofShift,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Suites to run: analytic, meander, flows, determinism [default: all]
    #[arg(long, value_delimiter = ',')]
    pub suite: Vec<String>,
    #[arg(long, value_enum, hide = true)]
    pub mutate: Option<Mutation>,
    #[arg(long, default_value_t = 0.5, hide = true)]
    pub shift: f64,
}

fn parse_sampler(s: &str) -> Result<Sampler, String> {
    s.parse().map_err(|e: condflow::Error| e.to_string())
}

fn parse_monitoring(s: &str) -> Result<Monitoring, String> {
    s.parse().map_err(|e: condflow::Error| e.to_string())
}
