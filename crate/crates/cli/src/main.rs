//! `seqtrack`: solve, simulate, evaluate, sweep and verify from the command
//! line. Exit status is 0 on success, 1 on error and 2 when results were
//! produced but a verification check failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Overrides;
use output::{Format, Outputs};

#[derive(Debug, Parser)]
#[command(
    name = "seqtrack",
    version,
    about = "Optimal tracking of a hidden two-state Markov drift"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    /// Directory for reports and relative dump paths.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the switching threshold B and constant K.
    Solve(SolveArgs),
    /// Simulate signal, observation and posterior-mean paths.
    Simulate(SimulateArgs),
    /// Monte Carlo cost of one policy.
    Evaluate(EvaluateArgs),
    /// Monte Carlo cost of threshold policies over a grid of B.
    Sweep(SweepArgs),
    /// Run the verification checks on the solved value function.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Write x, phi, dphi on the full solver grid.
    #[arg(long)]
    dump_phi: Option<PathBuf>,
    /// Write x, v_plus, v_minus, v_star on a uniform grid.
    #[arg(long)]
    dump_value: Option<PathBuf>,
    /// Points in the value-function grid.
    #[arg(long, default_value_t = 401)]
    value_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    Threshold,
    Never,
    Sign,
    Custom,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Threshold; defaults to the solved optimum.
    #[arg(long = "B", alias = "b")]
    b: Option<f64>,
    /// Steps per decision of the sign policy.
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Lower switching level of the custom policy.
    #[arg(long, allow_hyphen_values = true)]
    down: Option<f64>,
    /// Upper switching level of the custom policy.
    #[arg(long, allow_hyphen_values = true)]
    up: Option<f64>,
    /// Control in force before time zero.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    a_init: i8,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    paths: usize,
    /// Long-format CSV of every path: path_id, t, theta, x, m (, a).
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Attach a policy to the simulated paths.
    #[arg(long, value_enum)]
    policy: Option<PolicyName>,
    #[command(flatten)]
    policy_args: PolicyArgs,
    /// Write every n-th grid point to the dump.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormName {
    M,
    Theta,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    policy: PolicyName,
    #[command(flatten)]
    policy_args: PolicyArgs,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Cost form reported at the top level.
    #[arg(long, value_enum, default_value = "m")]
    form: FormName,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated thresholds; overrides --from/--to/--step.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.4)]
    from: f64,
    #[arg(long, default_value_t = 0.8)]
    to: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Add the solved optimum to the grid.
    #[arg(long)]
    include_optimal: bool,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    a_init: i8,
    /// Write B, mean, stderr rows.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Include the entrance-integral table and the l'Hopital ratio trace.
    #[arg(long)]
    boundary: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = match Outputs::new(cli.out.clone(), cli.format) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let result = cli.overrides.resolve().and_then(|cfg| match &cli.command {
        Command::Solve(a) => commands::solve(&cfg, a, &mut out),
        Command::Simulate(a) => commands::simulate(&cfg, a, &mut out),
        Command::Evaluate(a) => commands::evaluate(&cfg, a, &mut out),
        Command::Sweep(a) => commands::sweep(&cfg, a, &mut out),
        Command::Verify(a) => commands::verify(&cfg, a, &mut out),
    });
    match result {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Flagged(why)) => {
            eprintln!("flagged: {why}");
            ExitCode::from(2)
        }
        Err(e) => {
            out.discard();
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
