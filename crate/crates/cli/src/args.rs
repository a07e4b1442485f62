use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const SEED_ENV: &str = "SHEETSTOP_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "sheetstop",
    version,
    about = "Optimal stopping experiments for the Brownian sheet"
)]
pub struct Cli {
    /// key=value defaults for the subcommand's flags; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the table or report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Where to write the run manifest (default: <out>.manifest.json, or stderr).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate E[exp(-β²τ₁τ₂/2)] at first hitting points and compare with exp(-β|y|).
    LaplaceCheck(LaplaceArgs),
    /// Optimal levels and their values.
    Thresholds(ThresholdArgs),
    /// Sample a closed-form value curve.
    Curves(CurveArgs),
    /// Exponential martingale, isometry and second moment checks.
    IdentitySuite(IdentityArgs),
    /// Concave envelope, g_n iteration and continuation regions.
    Majorant(MajorantArgs),
    /// Estimate the discounted integral of the sheet up to a first hitting point.
    IntegratedMc(IntegratedArgs),
    /// Re-run the command recorded in a manifest.
    Replay { manifest_file: PathBuf },
}

#[derive(Debug, Args, Clone)]
pub struct McArgs {
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 7)]
    pub seed: u64,
    /// Lattice rows per unit of t.
    #[arg(long)]
    pub per_unit: Option<usize>,
    /// Pair each sheet with its negation.
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Args)]
pub struct LaplaceArgs {
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub beta: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1",
        allow_negative_numbers = true
    )]
    pub y: Vec<f64>,
    /// axis:X0 or diagonal:C; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',', default_value = "axis:1")]
    pub rule: Vec<String>,
    /// Largest τ₁τ₂ searched (default 50/β²).
    #[arg(long)]
    pub budget: Option<f64>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// linear, power:N or exp:K.
    #[arg(long, default_value = "linear")]
    pub reward: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CurveId {
    Phi,
    F,
    Baseline,
    Axis,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_enum, default_value = "f")]
    pub which: CurveId,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value = "linear")]
    pub reward: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub y_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub y_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct IdentityArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 7)]
    pub seed: u64,
    /// Cells per side of each check's lattice.
    #[arg(long, default_value_t = 64)]
    pub cells: usize,
    /// β of the martingale check.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct MajorantArgs {
    /// call:K, spike:Y0, or concave (2 - (y-c)² clipped at 0, c the midpoint).
    #[arg(long, default_value = "call:1")]
    pub shape: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 256)]
    pub nodes: usize,
    #[arg(long, default_value_t = 50)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub epsilon: Vec<f64>,
    /// Where to write the JSON summary (default: stderr).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegratedArgs {
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Levels; `star` stands for the maximizer of F.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "star",
        allow_negative_numbers = true
    )]
    pub y: Vec<String>,
    #[arg(long, default_value = "axis:1")]
    pub rule: String,
    /// Largest τ₁τ₂ simulated; censored axis runs are completed exactly.
    #[arg(long, default_value_t = 2.0)]
    pub budget: f64,
    #[command(flatten)]
    pub mc: McArgs,
}
