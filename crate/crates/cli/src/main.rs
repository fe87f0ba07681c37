//! `h2cert`: simulation-free consistency checks between lumped and
//! distributed mechanical models.
//!
//! Exit codes: 0 consistent / target met / success, 1 inconsistent /
//! target not met / bound violated, 2 any error.

mod commands;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use h2cert::mor::SeedGrid;

#[derive(Parser, Debug)]
#[command(name = "h2cert", version, about = "A priori H2 error bounds between LPMs and DPMs")]
struct Cli {
    /// Worker threads for the parallel parts (0 = all cores).
    #[arg(long, global = true, env = "H2CERT_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full consistency check: C1, C2, reduction, bound, verdict.
    Check(CheckArgs),
    /// Reduce a DPM and write the ROM family with its certified errors.
    Reduce(ReduceArgs),
    /// Backward-Euler simulation of one model.
    Simulate(SimulateArgs),
    /// H2 norm of one model, or H2 distance between two.
    H2(H2Args),
}

#[derive(Args, Debug, Clone)]
struct ReductionArgs {
    /// Relative certified error at which the reduction stops.
    #[arg(long, default_value_t = 0.01)]
    target: f64,
    /// Largest ROM order.
    #[arg(long, default_value_t = 300)]
    max_order: usize,
    /// Shift-search seed grid, `<magnitudes>x<shapes>`.
    #[arg(long, default_value = "24x6")]
    seed_grid: SeedGrid,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// LPM network document (JSON).
    lpm: PathBuf,
    /// DPM manifest (JSON).
    dpm: PathBuf,
    /// Relative tolerance on the bound.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    #[command(flatten)]
    reduction: ReductionArgs,
    /// Output directory.
    #[arg(long, default_value = "h2cert-out")]
    out: PathBuf,
    /// Also simulate both models and test the time-domain bound.
    #[arg(long)]
    validate: bool,
    /// Validation time step (s); default from the LPM poles.
    #[arg(long)]
    dt: Option<f64>,
    /// Validation horizon (s); default from the LPM poles and the input support.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// DPM manifest (JSON).
    dpm: PathBuf,
    #[command(flatten)]
    reduction: ReductionArgs,
    #[arg(long, default_value = "h2cert-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// LPM document or DPM manifest.
    model: PathBuf,
    /// Input signal applied to every channel, as JSON or `@file.json`;
    /// defaults to the model's own signals.
    #[arg(long)]
    signal: Option<String>,
    /// Time step (s).
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Horizon (s).
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// LPM whose poles set the default grid (for DPM models).
    #[arg(long)]
    lpm: Option<PathBuf>,
    #[arg(long, default_value = "h2cert-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct H2Args {
    /// LPM document or DPM manifest.
    model_a: PathBuf,
    /// Second model; prints the H2 distance when given.
    model_b: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    let outcome = match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::H2(a) => commands::h2(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
