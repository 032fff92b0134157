//! `isocurv`: solve, certify, probe, compare and self-check the isotropic curvature model.

mod certify;
mod check;
mod compare;
mod error;
mod output;
mod probe;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "isocurv", version, about = "Isotropic curvature model toolkit")]
struct Cli {
    /// Worker threads for Monte Carlo and probing (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving all outputs (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the model for a gradient and curvature function.
    Solve(solve::SolveArgs),
    /// Taylor-remainder curvature probe of an oracle loss.
    Probe(probe::ProbeArgs),
    /// Alignment, kink and converse certificates for a gradient.
    Certify(certify::CertifyArgs),
    /// Run the property suite; exits with 1 if any property fails.
    Check(check::CheckArgs),
    /// One-step comparison of update rules on a synthetic loss.
    Compare(compare::CompareArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure {threads} threads: {e}")))?;
    }
    match cli.command {
        Command::Solve(args) => solve::run(&args),
        Command::Probe(args) => probe::run(&args),
        Command::Certify(args) => certify::run(&args),
        Command::Check(args) => check::run(&args),
        Command::Compare(args) => compare::run(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isocurv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
