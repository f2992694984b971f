//! Batch front door: parse a run configuration, orchestrate
//! check -> solve -> certify pipelines, and emit reports plus plot-ready
//! CSV data.
//!
//! Exit status contract: 0 success, 1 mathematical failure (failed
//! hypothesis check, non-convergence, bound violation), 2 usage error.

mod assemble;
mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceFlag {
    Analytic,
    None,
}

#[derive(Parser)]
#[command(name = "pmcgraph", version, about = "Prescribed-mean-curvature graph laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Run configuration (INI-style; see docs/config.md)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run the solve even when hypothesis checks fail
    #[arg(long)]
    force: bool,
    /// Error reporting against the configured analytic reference
    #[arg(long, value_enum, default_value = "none")]
    reference: ReferenceFlag,
    /// Fan-out width for independent solves (convergence studies)
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the solvability hypotheses and write margin reports
    Check(CommonArgs),
    /// Continuation solve with optional barrier certification and bounds
    Solve(CommonArgs),
    /// Grid-refinement study: solve at several resolutions, report orders
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated node counts per axis, e.g. 33,65,129
        #[arg(long, value_delimiter = ',')]
        resolutions: Vec<usize>,
    },
    /// Build and certify the boundary barrier (no solve)
    Barriers(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => commands::run_check(a),
        Command::Solve(a) => commands::run_solve(a),
        Command::Convergence { common, resolutions } => {
            commands::run_convergence(common, resolutions)
        }
        Command::Barriers(a) => commands::run_barriers(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::classify_error(&err))
        }
    }
}
