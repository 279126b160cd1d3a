//! `dyniv` command-line tool.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation, 3 numerical failure.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dyniv", version, about = "IV estimation of dynamic treatment effects on censored durations")]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Never changes output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Random seed; falls back to DYNIV_SEED, then 0.
    #[arg(long, env = "DYNIV_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Solver configuration JSON; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Override the number of optimizer starts.
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from a simulation design.
    Simulate(commands::SimulateArgs),
    /// Estimate the structural parameters from a dataset.
    Estimate(commands::EstimateArgs),
    /// Bootstrap percentile intervals for the estimate.
    Bootstrap(commands::BootstrapArgs),
    /// Run a Monte Carlo experiment with warp-speed coverage.
    Montecarlo(commands::MontecarloArgs),
    /// Hazard curves per treatment arm, optionally with bootstrap bands.
    Curves(commands::CurvesArgs),
    /// Check the identification and censoring identities on simulated data.
    Verify(commands::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Bootstrap(a) => commands::bootstrap(a),
        Command::Montecarlo(a) => commands::montecarlo(a),
        Command::Curves(a) => commands::curves(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
