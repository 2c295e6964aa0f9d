//! Command-line surface for bound computation, comparison sweeps, extremal
//! reconstruction and verification runs.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure.

mod run;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tailbound", version, about = "Concentration bounds from moment data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one bound and print `method,value,clamped,status`.
    Bound(BoundArgs),
    /// Sweep methods over a deviation grid and write a CSV.
    Compare(CompareArgs),
    /// Reconstruct a worst-case distribution and report attainment (JSON).
    Extremal(ExtremalArgs),
    /// Check a bound against an independent oracle (JSON).
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Number of variables; defaults to the length of --mu.
    #[arg(long)]
    pub(crate) n: Option<usize>,
    /// Comma-separated means (one value is reused for all variables).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub(crate) mu: Vec<f64>,
    /// Comma-separated second moments, aligned with --mu.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub(crate) mu2: Vec<f64>,
    /// Deviation of the per-variable mean.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub(crate) t: f64,
    /// Support interval as `lo,hi`; `-inf` allowed as lower endpoint.
    #[arg(long, value_parser = run::parse_support, allow_hyphen_values = true)]
    pub(crate) support: Option<(f64, f64)>,
    /// Decision-polynomial degree for the sos method.
    #[arg(long, default_value_t = 2)]
    pub(crate) sos_degree: u32,
    /// Hierarchy level for the sos methods.
    #[arg(long)]
    pub(crate) level: Option<u32>,
    /// Objective pricing for the sos method.
    #[arg(long, default_value = "exact", value_parser = ["exact", "rank1"])]
    pub(crate) objective: String,
    /// Lower truncation radius for unbounded-below supports.
    #[arg(long, default_value_t = 10.0)]
    pub(crate) truncation: f64,
}

#[derive(Args)]
struct BoundArgs {
    /// One of: hoeffding, exact1, chernoff, chernoff-general, variational,
    /// linear, bernstein, bennett, sos, sos-mu2-grid.
    #[arg(long)]
    pub(crate) method: String,
    #[command(flatten)]
    pub(crate) problem: ProblemArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated method list; column order follows this order.
    #[arg(long, value_delimiter = ',')]
    pub(crate) methods: Vec<String>,
    /// Deviation grid `start:stop:step` (inclusive of stop within 1e-12).
    #[arg(long)]
    pub(crate) t_grid: String,
    /// Output CSV path.
    #[arg(long)]
    pub(crate) out: std::path::PathBuf,
    /// Omit the '#'-prefixed run manifest.
    #[arg(long)]
    pub(crate) no_manifest: bool,
    #[command(flatten)]
    pub(crate) problem: ProblemArgs,
}

#[derive(Args)]
struct ExtremalArgs {
    /// One of: exact1, chernoff, variational.
    #[arg(long)]
    pub(crate) method: String,
    #[command(flatten)]
    pub(crate) problem: ProblemArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Method to verify (any `bound` method).
    #[arg(long)]
    pub(crate) method: String,
    /// Oracle: lp, product, or mc.
    #[arg(long)]
    pub(crate) oracle: String,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    pub(crate) samples: usize,
    /// Seed for the randomized oracles.
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    #[command(flatten)]
    pub(crate) problem: ProblemArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bound(args) => run::bound(&args.method, &args.problem),
        Command::Compare(args) => run::compare(&args),
        Command::Extremal(args) => run::extremal(&args.method, &args.problem),
        Command::Verify(args) => run::verify(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(run::CliError::InvalidInput(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(run::CliError::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(3)
        }
        Err(run::CliError::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(2)
        }
    }
}
