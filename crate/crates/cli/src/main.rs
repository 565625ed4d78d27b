use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fracdrift::{load_file, run, Experiment, RunError};

#[derive(Parser)]
#[command(name = "fracdrift", version, about = "Experiments for fractional drift-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay slopes of the stable semigroup against the theoretical exponents.
    Decay(Args),
    /// Empirical bilinear constant eta(T) and its power-law fit.
    Eta(Args),
    /// Mild solution by Picard iteration, with its local-existence certificate.
    Solve(Args),
    /// Interacting particle system and Picard iteration on path laws.
    Particles(Args),
    /// PDE against particle densities from earlier solve and particles runs.
    Compare(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Decay(a) => (Experiment::Decay, a),
        Command::Eta(a) => (Experiment::Eta, a),
        Command::Solve(a) => (Experiment::Solve, a),
        Command::Particles(a) => (Experiment::Particles, a),
        Command::Compare(a) => (Experiment::Compare, a),
    };
    let resolved = match load_file(&args.config, experiment, args.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    match run(&resolved, &args.out) {
        Ok(r) => {
            for w in &r.output.warnings {
                eprintln!("warning: {w}");
            }
            for a in &r.output.assertions {
                println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("wrote {}", r.dir.display());
            if r.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
