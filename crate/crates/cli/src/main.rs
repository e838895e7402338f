//! `refpulse`: verification reports, security-region and gain plot data,
//! intensity optimisation and protocol simulation, written as CSV/JSON.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::FileConfig;

pub const OUT_DIR_ENV: &str = "REFPULSE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "refpulse",
    version,
    about = "Security analysis and simulation for strong-reference-pulse QKD"
)]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory [default: $REFPULSE_OUT_DIR, else the working directory].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Worker threads for parallel sweeps (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// CSV series plus a JSON summary.
    Csv,
    /// JSON only.
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the filter/POVM operator identities in a truncated Fock space.
    Verify(VerifyArgs),
    /// Positive-gain region with curve-A/B overlays.
    Region(RegionArgs),
    /// Key gain for one set of tallies.
    Gain(GainArgs),
    /// Optimal signal intensity and gain against transmission.
    Optimize(OptimizeArgs),
    /// Monte Carlo run of the protocol and its key length.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub beta_sq: Option<f64>,
    /// Fock truncation [default: 32].
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Identity tolerance [default: 1e-8].
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Grid per axis for the (m0, m1) search [default: 33].
    #[arg(long)]
    pub m_grid: Option<usize>,
    /// Tolerance on the phase-error root [default: 1e-9].
    #[arg(long)]
    pub ph_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long)]
    pub alpha_sq: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// LO intensity [default: eta * alpha_sq].
    #[arg(long)]
    pub beta_sq: Option<f64>,
    /// Columns in n_fil/n_fil0 [default: 200].
    #[arg(long)]
    pub x_points: Option<usize>,
    /// Rows in n_err/n_fil [default: 200].
    #[arg(long)]
    pub rate_points: Option<usize>,
    /// Largest n_fil/n_fil0 [default: 2].
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Largest error rate [default: 0.15].
    #[arg(long)]
    pub rate_max: Option<f64>,
    /// Relative bisection tolerance on the boundary [default: 1e-4].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    #[arg(long)]
    pub alpha_sq: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta_sq: Option<f64>,
    /// Curve A: spurious click rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Curve A: dark count rate (with --zeta).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Curve A: misalignment (with --gamma).
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Curve B: phase misalignment, radians.
    #[arg(long)]
    pub delta_phi: Option<f64>,
    /// Manual: conclusive data pairs as a fraction of N.
    #[arg(long)]
    pub n_fil: Option<f64>,
    /// Manual: check errors as a fraction of N.
    #[arg(long)]
    pub n_err: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Transmissions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
    /// Log-spaced sweep instead of --eta.
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub eta_points: Option<usize>,
    /// Dark count rates, one per model set [default: 0].
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// Misalignments, one per model set [default: 0].
    #[arg(long, value_delimiter = ',')]
    pub zeta: Option<Vec<f64>>,
    /// Intensity search range [default: 1e-6..10].
    #[arg(long)]
    pub alpha_sq_min: Option<f64>,
    #[arg(long)]
    pub alpha_sq_max: Option<f64>,
    /// CSV with columns eta,gain to embed as a comparison curve.
    #[arg(long)]
    pub reference_series: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub alpha_sq: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta_sq: Option<f64>,
    /// Pairs per half [default: 100000].
    #[arg(long)]
    pub n_pairs: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Phase rotation of the signal, radians [default: 0].
    #[arg(long)]
    pub delta_phi: Option<f64>,
    /// Per-pulse spurious click probability [default: 0].
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(refpulse_core::Error),
    Io { path: PathBuf, message: String },
    VerificationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use refpulse_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(E::Domain { .. } | E::Unsupported(_)) => 3,
            CliError::Core(E::InconsistentTallies { .. }) => 4,
            CliError::Core(E::Truncation { .. }) => 5,
            CliError::Io { .. } => 6,
            CliError::VerificationFailed(_) => 7,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use refpulse_core::Error as E;
        match self {
            CliError::Usage(m) | CliError::Config(m) => write!(f, "{m}"),
            CliError::Core(e @ E::Domain { .. }) => write!(f, "{e}; adjust the flag or config value"),
            CliError::Core(e @ E::Truncation { .. }) => write!(f, "{e}; raise --n-max"),
            CliError::Core(e @ E::InconsistentTallies { .. }) => {
                write!(f, "{e}; no attack reproduces these tallies, check n_fil/n_err")
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, message } => {
                write!(f, "{}: {message}; check the path and its permissions", path.display())
            }
            CliError::VerificationFailed(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<refpulse_core::Error> for CliError {
    fn from(e: refpulse_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub struct Context {
    pub file: FileConfig,
    pub format: Format,
    pub out: output::OutDir,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let format = match cli.format {
        Some(f) => f,
        None => match file.format.as_deref() {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "format \"{other}\" in config: expected csv or json"
                )))
            }
        },
    };
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?;
    }
    let dir = cli
        .out_dir
        .or_else(|| file.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut ctx = Context {
        file,
        format,
        out: output::OutDir::create(dir)?,
    };
    match cli.command {
        Command::Verify(a) => commands::verify(&a, &mut ctx),
        Command::Region(a) => commands::region(&a, &mut ctx),
        Command::Gain(a) => commands::gain(&a, &mut ctx),
        Command::Optimize(a) => commands::optimize(&a, &mut ctx),
        Command::Simulate(a) => commands::simulate(&a, &mut ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
