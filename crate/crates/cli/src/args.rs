use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leadlag_core::{Compounding, MatrixKind};

#[derive(Debug, Parser)]
#[command(
    name = "leadlag",
    version,
    about = "Simulate lead-lag factor models, trace correlation eigenvalues across time scales and fit them"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a return panel and write it as CSV.
    Simulate(SimulateArgs),
    /// Compute the largest eigenvalues of a panel at each aggregation scale.
    Spectrum(SpectrumArgs),
    /// Fit the eigenvalue-vs-scale law to each curve.
    Fit(FitArgs),
    /// Run the synthetic 533-asset, 4-factor scenario end to end.
    Reproduce(ReproduceArgs),
    /// Render curves (and fits) as one SVG per eigenvalue rank.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Corr,
    Cov,
}

impl From<KindArg> for MatrixKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Corr => MatrixKind::Correlation,
            KindArg::Cov => MatrixKind::Covariance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompoundingArg {
    Arithmetic,
    Geometric,
}

impl From<CompoundingArg> for Compounding {
    fn from(c: CompoundingArg) -> Self {
        match c {
            CompoundingArg::Arithmetic => Compounding::Arithmetic,
            CompoundingArg::Geometric => Compounding::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Log,
    Linear,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model spec as JSON; replaces the model flags below.
    #[arg(long, conflicts_with_all = ["assets", "factors", "alpha", "sigma", "factor_sigma", "beta", "beta_file"])]
    pub spec: Option<PathBuf>,
    /// Number of assets N.
    #[arg(long)]
    pub assets: Option<usize>,
    /// Number of factors F.
    #[arg(long, default_value_t = 1)]
    pub factors: usize,
    /// Lead-lag memory alpha in [0, 1).
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Idiosyncratic volatility: one value, or N comma-separated values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub sigma: Vec<f64>,
    /// Factor volatility: one value, or F comma-separated values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub factor_sigma: Vec<f64>,
    /// The same sensitivity for every asset and factor.
    #[arg(long, conflicts_with = "beta_file", allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Sensitivities, one line per asset with F comma- or space-separated values.
    #[arg(long)]
    pub beta_file: Option<PathBuf>,
    /// Number of time steps written.
    #[arg(long)]
    pub steps: usize,
    /// RNG seed; overrides the spec file seed, 0 if neither is given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Warm-up steps discarded; defaults to the stationary burn-in.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Output panel CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Input panel CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output curves JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregation scales in base steps [default: 1,2,4,...,128].
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<u64>>,
    /// Eigenvalues kept per scale.
    #[arg(long, default_value_t = 4)]
    pub top_k: usize,
    /// Correlation or covariance matrices.
    #[arg(long, value_enum, default_value_t = KindArg::Corr)]
    pub kind: KindArg,
    /// Minutes per row of the input panel.
    #[arg(long, default_value_t = 1.0)]
    pub base_minutes: f64,
    /// How base returns combine into a block return.
    #[arg(long, value_enum, default_value_t = CompoundingArg::Arithmetic)]
    pub compounding: CompoundingArg,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input curves JSON.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output fits JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Ranks to fit [default: all].
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Overrides the number of assets recorded in the curves file.
    #[arg(long)]
    pub assets: Option<usize>,
    /// Overrides the base scale recorded in the curves file.
    #[arg(long)]
    pub base_minutes: Option<f64>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Report directory.
    #[arg(long, default_value = "reproduce")]
    pub out: PathBuf,
    /// RNG seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// One-minute steps simulated.
    #[arg(long, default_value_t = 131_072)]
    pub steps: usize,
    /// Number of assets N.
    #[arg(long, default_value_t = 533)]
    pub assets: usize,
    /// Aggregation scales [default: 1,2,4,...,128].
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<u64>>,
    /// Eigenvalues kept per scale.
    #[arg(long, default_value_t = 4)]
    pub top_k: usize,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Curves JSON.
    #[arg(long)]
    pub curves: PathBuf,
    /// Fits JSON; must cover the same ranks as the curves.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    /// Output directory; files are named rank-<k>.svg.
    #[arg(long)]
    pub out: PathBuf,
    /// Horizontal axis scale.
    #[arg(long, value_enum, default_value_t = Axis::Log)]
    pub axis: Axis,
}
