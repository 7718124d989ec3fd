//! `nearopt` command-line front end.
//!
//! Exit codes: 0 success (or certified convergence), 2 ORACLE run not converged, 3 input or
//! usage error, 4 solver failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "nearopt", version, about = "Explore the near-optimal space of linear programs")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the model and write its optimal solution.
    Solve(SolveArgs),
    /// Run ORACLE or an MGA baseline and write trace, regions and summary.
    Explore(ExploreArgs),
    /// Distance and volume metrics for saved regions.
    Metrics(MetricsArgs),
    /// Draw designs from saved regions.
    Sample(SampleArgs),
    /// Run several methods on one problem and write combined metrics.
    Compare(CompareArgs),
    /// Write a seeded toy capacity-expansion model (and optionally a spec).
    Toy(ToyArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Problem, solver and loop settings shared by `explore` and `compare`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct RunArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the tolerance in the exploration spec file.
    #[arg(long)]
    pub tol: Option<f64>,
    /// ORACLE refinements (default 300) or MGA iterations (default 200).
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub rel_gap: f64,
    #[arg(long, default_value_t = 0.05)]
    pub abs_gap: f64,
    /// MILP time limit in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = 1)]
    pub pool_size: usize,
    #[arg(long)]
    pub no_value_cut: bool,
    #[arg(long)]
    pub no_cost_cut: bool,
    /// ORACLE: certified distance every N iterations, a cheap estimate in between.
    #[arg(long, default_value_t = 1)]
    pub exact_metric_every: usize,
    /// MGA: measure the distance every N iterations (0 = never).
    #[arg(long, default_value_t = 1)]
    pub measure_every: usize,
    /// Write zeros in the timing columns so repeated runs are byte-identical.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// oracle, hsj, hsj-rel, random, vmm, erg or spores.
    #[arg(long, default_value = "oracle")]
    pub method: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricsArgs {
    /// Inner points CSV.
    #[arg(long)]
    pub points: PathBuf,
    /// Outer halfspaces CSV.
    #[arg(long)]
    pub halfspaces: PathBuf,
    /// Trace CSV; one metrics row per trace row when given.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Reference outer halfspaces for the coverage distance.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub rel_gap: f64,
    #[arg(long, default_value_t = 0.05)]
    pub abs_gap: f64,
    #[arg(long)]
    pub no_volumes: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    Hitrun,
    Diverse,
    Vertices,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetArg {
    Inner,
    Outer,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub points: PathBuf,
    /// Required for the outer target, diverse and vertices modes.
    #[arg(long)]
    pub halfspaces: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SampleMode::Hitrun)]
    pub mode: SampleMode,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to 100 times the dimension.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, value_enum, default_value_t = TargetArg::Inner)]
    pub target: TargetArg,
    /// Sample inside the affine span of a flat hull.
    #[arg(long)]
    pub affine_span: bool,
    /// Starting cloud for diverse mode (defaults to the inner points).
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// With --spec, diverse designs are replaced by certified near-optimal designs.
    #[arg(long, requires = "spec")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Diverse mode: write each design with its nearest cloud point here.
    #[arg(long)]
    pub nearest_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated method list.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2_000)]
    pub mc_samples: usize,
    #[arg(long)]
    pub no_volumes: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub n_tech: usize,
    #[arg(long, default_value_t = 4)]
    pub n_periods: usize,
    /// Model JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an exploration spec over the first `--explore` capacities.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub explore: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Tolerance as a fraction of the largest capacity range.
    #[arg(long, default_value_t = 0.01)]
    pub tol_fraction: f64,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<nearopt::Error>() {
        Some(e) if e.is_solver_failure() => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Explore(a) => commands::explore(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Toy(a) => commands::toy(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
