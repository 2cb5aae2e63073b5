//! `kolmo`: command-line front end for kolmo-core.
//!
//! Exit codes: 0 success, 1 i/o, 2 invalid input, 3 structure (not canonical
//! or not hypoelliptic), 4 kernel (covariance not positive definite),
//! 5 solver, 6 Monte Carlo, 7 verification.

mod check;
mod error;
mod inspect;
mod parse;
mod simulate;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use error::CliError;

#[derive(Parser)]
#[command(name = "kolmo", version, about = "Kernels, solvers and Harnack checks for Kolmogorov operators")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical form, homogeneous dimension and hypoellipticity of a spec.
    Structure {
        #[arg(long)]
        spec: PathBuf,
    },
    #[command(subcommand)]
    Kernel(KernelCmd),
    #[command(subcommand)]
    Solve(SolveCmd),
    #[command(subcommand)]
    Mc(McCmd),
    /// Mollifies A0 and reports ellipticity and L1 distance per eps.
    Mollify(inspect::MollifyArgs),
    #[command(subcommand)]
    Check(CheckCmd),
    #[command(subcommand)]
    Example(ExampleCmd),
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Evaluates Γ_K^λ at a list of points, as CSV.
    Eval(inspect::KernelEvalArgs),
    /// Chapman–Kolmogorov check across an intermediate time.
    Reproduce(inspect::ReproduceArgs),
}

#[derive(Subcommand)]
enum SolveCmd {
    /// Cauchy problem from a datum field or an early-time kernel slice.
    Cauchy(solve::CauchyArgs),
    /// Approximate fundamental solution with width extrapolation.
    Fundamental(solve::FundamentalArgs),
}

#[derive(Subcommand)]
enum McCmd {
    /// Simulates paths and stores the ensemble.
    Simulate(simulate::SimulateArgs),
    /// Histogram density with standard errors, as CSV.
    Density(simulate::DensityArgs),
    /// Mass in D_R and the measure of D_R.
    Mass(simulate::MassArgs),
}

#[derive(Subcommand)]
enum CheckCmd {
    /// Gaussian sandwich fit.
    Bounds(check::BoundsArgs),
    /// Local Harnack quotient, or a sweep table with --sweep.
    Harnack(check::HarnackArgs),
    /// Harnack ratio over a past cone.
    Cone(check::ConeArgs),
    /// Global Harnack constant map.
    Global(check::GlobalArgs),
}

#[derive(Subcommand)]
enum ExampleCmd {
    /// Geometric-average Asian option priced by kernel quadrature and Monte Carlo.
    Asian(simulate::AsianArgs),
}

/// Grid and box flags shared by the solver commands.
#[derive(Args, Clone)]
pub struct GridArgs {
    /// Spatial box per coordinate as lo:hi (repeat once per coordinate).
    #[arg(long = "box", required = true, allow_hyphen_values = true, value_parser = parse::range)]
    pub bounds: Vec<(f64, f64)>,
    /// Grid spacing, one value or one per coordinate.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub grid: Vec<f64>,
    /// Maximal time step (default: the stability bound).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Stored time slices including both ends.
    #[arg(long, default_value_t = 2)]
    pub snapshots: usize,
    #[arg(long, value_enum, default_value = "cubic")]
    pub interp: Interp,
    /// Fail instead of warning when the solution reaches the box boundary.
    #[arg(long)]
    pub strict_boundary: bool,
    /// Mollify A0 with this eps before solving.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(clap::ValueEnum, Clone, Copy)]
pub enum Interp {
    Cubic,
    Linear,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Structure { spec } => inspect::structure(&spec),
        Command::Kernel(KernelCmd::Eval(a)) => inspect::kernel_eval(&a),
        Command::Kernel(KernelCmd::Reproduce(a)) => inspect::reproduce(&a),
        Command::Solve(SolveCmd::Cauchy(a)) => solve::cauchy(&a),
        Command::Solve(SolveCmd::Fundamental(a)) => solve::fundamental(&a),
        Command::Mc(McCmd::Simulate(a)) => simulate::simulate(&a),
        Command::Mc(McCmd::Density(a)) => simulate::density(&a),
        Command::Mc(McCmd::Mass(a)) => simulate::mass(&a),
        Command::Mollify(a) => inspect::mollify(&a),
        Command::Check(CheckCmd::Bounds(a)) => check::bounds(&a),
        Command::Check(CheckCmd::Harnack(a)) => check::harnack(&a),
        Command::Check(CheckCmd::Cone(a)) => check::cone(&a),
        Command::Check(CheckCmd::Global(a)) => check::global(&a),
        Command::Example(ExampleCmd::Asian(a)) => simulate::asian(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
