use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcl::experiments::{self, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "qcl", version, about = "Quantum control landscape navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config; omitted knobs take the experiment defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the infidelity from random seeds
    Optimize(RunArgs),
    /// Exact and finite-difference Hessian spectra at a solution
    Spectrum(RunArgs),
    /// Eigenvector error of the finite-difference Hessian versus ε
    FdError(RunArgs),
    /// Follow the null space from a solution
    Drive(RunArgs),
    /// Final infidelity versus ε along fixed directions
    Calibrate(RunArgs),
    /// Reduce high-frequency content while staying on the solution set
    Compress(RunArgs),
    /// Time exact and finite-difference eigendecompositions
    Benchmark(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Optimize(a) => (Experiment::Optimize, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::FdError(a) => (Experiment::FdError, a),
        Command::Drive(a) => (Experiment::Drive, a),
        Command::Calibrate(a) => (Experiment::Calibrate, a),
        Command::Compress(a) => (Experiment::Compress, a),
        Command::Benchmark(a) => (Experiment::Benchmark, a),
    };

    let result = args
        .config
        .as_deref()
        .map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
        .and_then(|config| experiments::run(experiment, &config, &args.out));

    match result {
        Ok(manifest) => {
            println!("{}", serde_json::to_string(&manifest).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string(), "kind": e.kind() }));
            ExitCode::FAILURE
        }
    }
}
