//! Experiment harness around the sampler library: config files, reproducible
//! runs, metric emission, grid sweeps, and ground-truth generation.
//!
//! Everything an experiment produces lands in one output directory:
//!
//! - `manifest.toml` - the fully resolved configuration plus a content hash;
//!   every other file's header carries that hash.
//! - `dataset.tsv` - the synthetic dataset (self-describing, regenerable).
//! - `records.tsv`, `zeta.tsv`, `particles.tsv` - per-iteration raw output.
//! - `estimates.tsv`, `mse_per_t.tsv`, `mse_vs_r.tsv`, `ess.tsv`,
//!   `histograms.tsv`, `summary.toml` - derived metric tables.
//!
//! Outputs are deterministic functions of the configuration: reruns and
//! different worker counts produce bit-identical files. Wall-clock timing
//! goes to stderr only.

pub mod config;
pub mod manifest;
pub mod metrics;
pub mod oracle;
pub mod records;
pub mod runner;
pub mod sweep;

use std::process::ExitCode;

/// Harness error split by exit code: configuration problems exit 2, runtime
/// aborts exit 3.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Runtime(anyhow::Error),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "configuration error: {msg}"),
            AppError::Runtime(e) => write!(f, "runtime error: {e:#}"),
        }
    }
}

impl From<ipmcmc::Error> for AppError {
    fn from(e: ipmcmc::Error) -> Self {
        match e {
            ipmcmc::Error::Config(msg) => AppError::Config(msg),
            other => AppError::Runtime(anyhow::Error::new(other)),
        }
    }
}

impl From<anyhow::Error> for AppError {
    fn from(e: anyhow::Error) -> Self {
        AppError::Runtime(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Runtime(anyhow::Error::new(e))
    }
}

pub fn exit_code(result: Result<(), AppError>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                AppError::Config(_) => ExitCode::from(2),
                AppError::Runtime(_) => ExitCode::from(3),
            }
        }
    }
}
