use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipmcmc_cli::{exit_code, metrics, oracle, runner, sweep};

/// Experiment runner for the interacting particle MCMC sampler pool.
#[derive(Parser)]
#[command(name = "ipmcmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a TOML config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a parameter grid (resumable cell by cell).
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write ground-truth files for a model configuration.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute metric tables from a run directory's record files.
    Metrics {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    exit_code(match cli.command {
        Command::Run { config } => runner::cmd_run(&config),
        Command::Sweep { config } => sweep::cmd_sweep(&config),
        Command::Oracle { config } => oracle::cmd_oracle(&config),
        Command::Metrics { run_dir } => metrics::recompute(&run_dir),
    })
}
