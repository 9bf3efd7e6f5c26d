use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "tailproc",
    version,
    about = "Heavy-tailed linear processes: simulation, likelihood moment GPD fits, asymptotic covariance"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path of the linear process.
    Simulate(SimulateArgs),
    /// Fit a GPD by likelihood moment estimation to the top-k excesses of a series.
    Fit(FitArgs),
    /// Asymptotic covariance of the estimator pair.
    Cov(CovArgs),
    /// Check the sufficient conditions for the normal limit under Pareto innovations.
    Check(CheckArgs),
    /// Monte Carlo validation of the normal limit.
    Validate(ValidateArgs),
}

/// Coefficients inline or as an ARMA filter.
#[derive(Debug, Clone, Args)]
pub struct CoeffArgs {
    /// Moving average coefficients c_0, c_1, ... [default: 1]
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, conflicts_with_all = ["ar", "ma"])]
    pub coeffs: Option<Vec<f64>>,
    /// AR coefficients phi_1, ..., phi_p of an ARMA filter [default: none]
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub ar: Option<Vec<f64>>,
    /// MA coefficients theta_1, ..., theta_q of an ARMA filter [default: none]
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub ma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Innovations {
    /// Pareto on [1, inf)
    OneSided,
    /// Pareto magnitude with a fair random sign
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Simulate the process and take the top-k excesses
    Process,
    /// Draw k iid GPD(1/alpha, 1) excesses directly
    ExactGpd,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    /// Pareto tail index of the innovations
    #[arg(long, default_value_t = 3.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Innovations::OneSided)]
    pub innovations: Innovations,
    /// Path length
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file [default: stdout]
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Single-column CSV or one value per line; an optional header line is skipped [default: stdin]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of excesses; required unless --excesses is given [default: none]
    #[arg(long)]
    pub k: Option<usize>,
    /// LME exponent, must be negative
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub r: f64,
    /// Treat the input as excesses over a threshold instead of a raw series [default: off]
    #[arg(long, default_value_t = false)]
    pub excesses: bool,
    /// Output file [default: stdout]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CovArgs {
    /// Tail index gamma [required]
    #[arg(long)]
    pub gamma: f64,
    /// LME exponent, must be negative
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub r: f64,
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    /// Output file [default: stdout]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Pareto tail index of the innovations
    #[arg(long, default_value_t = 3.0)]
    pub alpha: f64,
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    /// Moment margin xi in (0, 1)
    #[arg(long, default_value_t = 0.9)]
    pub xi: f64,
    /// Output file [default: stdout]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Every experiment flag may also come from the `--input` config file; flags win.
#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// JSON config file with keys coeffs, ar, ma, alpha, innovations, r, n, k, theta, reps, seed, workers, sampling [default: none]
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub coeffs: CoeffArgs,
    /// Pareto tail index of the innovations
    #[arg(long, default_value_t = 3.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Innovations::OneSided)]
    pub innovations: Innovations,
    /// LME exponent, must be negative
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub r: f64,
    /// Path length
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    /// Number of excesses [default: growth rule with --theta]
    #[arg(long)]
    pub k: Option<usize>,
    /// Exponent scale of the k(n) growth rule, in (0, 1)
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    /// Monte Carlo replications
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; results do not depend on it [default: all available cores]
    #[arg(long, env = "TAILPROC_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Sampling::Process)]
    pub sampling: Sampling,
    /// Directory receiving records.csv and report.json [default: none]
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// What to print on stdout: the report (json) or the records (csv)
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}
