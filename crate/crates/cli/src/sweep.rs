//! The `sweep` subcommand: parameter grids with per-cell resumption.
//!
//! Three grid kinds:
//!
//! - `conditional-count`: the error-vs-P study. Every cell runs the
//!   interacting sampler on one dataset; the `P = M` cell is multi-start PG
//!   and normalizes the others, so values below 1 beat it.
//! - `samplers`: head-to-head comparison of sampler kinds on shared
//!   datasets.
//! - `switching`: Monte Carlo switching-probability curves under the
//!   log-normal limit.
//!
//! Each cell writes into its own subdirectory and drops a `done` marker;
//! rerunning a sweep skips finished cells, so an interrupted grid resumes
//! where it stopped.

use std::path::{Path, PathBuf};

use ipmcmc::analysis::{switching_curve, LogNormalLimit};
use serde::{Deserialize, Serialize};

use crate::config::{
    ExperimentSection, MetricKind, ModelKind, ModelSection, RunConfig, SamplerKind,
};
use crate::metrics::MSE_VS_R_FILE;
use crate::records::{TsvField, TsvWriter};
use crate::AppError;

pub const SWEEP_ERRORS_FILE: &str = "sweep_errors.tsv";
pub const SAMPLER_ERRORS_FILE: &str = "sampler_errors.tsv";
pub const SWITCHING_FILE: &str = "switching.tsv";
pub const DONE_MARKER: &str = "done";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    ConditionalCount,
    Samplers,
    Switching,
}

fn default_trials() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Grid axes. `nodes` is a list of M values; `conditional` a list of P
    /// values (conditional-count); `samplers` the sampler kinds to compare.
    #[serde(default)]
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub conditional: Vec<usize>,
    #[serde(default)]
    pub samplers: Vec<SamplerKind>,
    #[serde(default)]
    pub dataset_seeds: Vec<u64>,
    pub iterations: Option<usize>,
    pub particles: Option<usize>,
    #[serde(default = "default_worker_count")]
    pub worker_count: usize,
    /// Switching grid only.
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
}

fn default_worker_count() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sweep: SweepSection,
    pub model: Option<ModelSection>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<SweepConfig, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut config: SweepConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        if let Ok(dir) = std::env::var(crate::config::ENV_OUTPUT_DIR) {
            config.sweep.output_dir = PathBuf::from(dir);
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), AppError> {
        let s = &self.sweep;
        match s.kind {
            SweepKind::Switching => {
                if s.sigma.is_empty() || s.nodes.is_empty() {
                    return Err(AppError::Config(
                        "sweep.sigma/sweep.nodes: the switching grid needs both".into(),
                    ));
                }
                if s.trials == 0 {
                    return Err(AppError::Config("sweep.trials: must be at least 1".into()));
                }
            }
            SweepKind::ConditionalCount => {
                if s.nodes.is_empty() || s.conditional.is_empty() {
                    return Err(AppError::Config(
                        "sweep.nodes/sweep.conditional: the conditional-count grid needs both"
                            .into(),
                    ));
                }
                self.require_runs()?;
            }
            SweepKind::Samplers => {
                if s.samplers.is_empty() {
                    return Err(AppError::Config(
                        "sweep.samplers: at least one sampler required".into(),
                    ));
                }
                if s.nodes.len() != 1 {
                    return Err(AppError::Config(
                        "sweep.nodes: the samplers grid takes exactly one M value".into(),
                    ));
                }
                if s.samplers.contains(&SamplerKind::Ipmcmc) && s.conditional.len() != 1 {
                    return Err(AppError::Config(
                        "sweep.conditional: one P value required when comparing ipmcmc".into(),
                    ));
                }
                self.require_runs()?;
            }
        }
        Ok(())
    }

    fn require_runs(&self) -> Result<(), AppError> {
        let s = &self.sweep;
        if s.dataset_seeds.is_empty() {
            return Err(AppError::Config(
                "sweep.dataset_seeds: at least one dataset required".into(),
            ));
        }
        if s.iterations.unwrap_or(0) == 0 {
            return Err(AppError::Config("sweep.iterations: must be at least 1".into()));
        }
        if s.particles.unwrap_or(0) < 2 {
            return Err(AppError::Config("sweep.particles: must be at least 2".into()));
        }
        let model = self.model.as_ref().ok_or_else(|| {
            AppError::Config("model: section required for run-based sweeps".into())
        })?;
        if model.kind == ModelKind::Nlssm {
            return Err(AppError::Config(
                "model.kind: error sweeps need an exact oracle; nlssm has none".into(),
            ));
        }
        if model.horizon.unwrap_or(0) == 0 && model.dataset.is_none() {
            return Err(AppError::Config("model.horizon: must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn cmd_sweep(config_path: &Path) -> Result<(), AppError> {
    let config = SweepConfig::load(config_path)?;
    std::fs::create_dir_all(&config.sweep.output_dir)?;
    match config.sweep.kind {
        SweepKind::Switching => run_switching(&config),
        SweepKind::ConditionalCount => run_conditional_count(&config),
        SweepKind::Samplers => run_samplers(&config),
    }
}

fn run_switching(config: &SweepConfig) -> Result<(), AppError> {
    let s = &config.sweep;
    let mut file = TsvWriter::create(
        &s.output_dir.join(SWITCHING_FILE),
        "switching",
        "m p sigma estimate stderr",
    )?;
    for &sigma in &s.sigma {
        let limit = LogNormalLimit::new(sigma)
            .map_err(|e| AppError::Config(format!("sweep.sigma: {e}")))?;
        for &m in &s.nodes {
            for point in switching_curve(&limit, m, s.trials, s.seed) {
                file.row([
                    TsvField::Uint(point.m as u64),
                    TsvField::Uint(point.p as u64),
                    TsvField::Float(point.sigma),
                    TsvField::Float(point.estimate),
                    TsvField::Float(point.std_error),
                ])?;
            }
        }
    }
    file.flush()?;
    eprintln!(
        "switching curves written to {}",
        s.output_dir.join(SWITCHING_FILE).display()
    );
    Ok(())
}

/// Builds the run configuration for one grid cell.
fn cell_config(
    config: &SweepConfig,
    sampler: SamplerKind,
    m: usize,
    p: Option<usize>,
    dataset_seed: u64,
    dir: PathBuf,
) -> RunConfig {
    let s = &config.sweep;
    let mut model = config.model.clone().expect("validated");
    model.dataset_seed = dataset_seed;
    RunConfig {
        experiment: ExperimentSection {
            sampler,
            seed: s.seed ^ (dataset_seed.wrapping_mul(0x9e3779b97f4a7c15)),
            iterations: s.iterations.expect("validated"),
            nodes: m,
            conditional: p,
            particles: s.particles.expect("validated"),
            worker_count: s.worker_count,
            output_dir: dir,
            rao_blackwell: true,
            metrics: vec![MetricKind::Mse],
            dump_particles: false,
            checkpoints: Vec::new(),
            histogram_steps: Vec::new(),
            histogram_bins: 50,
            histogram_range: [-30.0, 30.0],
        },
        model,
    }
}

/// Runs a cell unless its `done` marker exists; returns the overall error
/// of the preferred estimator at the final iteration.
fn run_cell(cell: &RunConfig) -> Result<f64, AppError> {
    let dir = &cell.experiment.output_dir;
    let marker = dir.join(DONE_MARKER);
    if !marker.exists() {
        cell.validate()?;
        crate::runner::run_with_config(cell)?;
        std::fs::write(&marker, "ok\n")?;
    }
    read_final_error(dir, cell.experiment.iterations)
}

/// Reads the overall error at the final iteration from a cell's
/// `mse_vs_r.tsv`, preferring the Rao-Blackwellized estimator.
fn read_final_error(dir: &Path, iterations: usize) -> Result<f64, AppError> {
    let path = dir.join(MSE_VS_R_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    let mut best: Option<(u64, f64)> = None;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            continue;
        }
        let r: usize = fields[0].parse().unwrap_or(0);
        let estimator: u64 = fields[1].parse().unwrap_or(0);
        let mse: f64 = fields[2].parse().unwrap_or(f64::NAN);
        if r == iterations {
            match best {
                Some((code, _)) if code >= estimator => {}
                _ => best = Some((estimator, mse)),
            }
        }
    }
    best.map(|(_, mse)| mse).ok_or_else(|| {
        AppError::Config(format!(
            "{}: no final-iteration row found",
            path.display()
        ))
    })
}

fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (at(0.25), at(0.5), at(0.75))
}

fn run_conditional_count(config: &SweepConfig) -> Result<(), AppError> {
    let s = &config.sweep;
    let out = &s.output_dir;
    let mut rows = Vec::new();
    for &m in &s.nodes {
        // Every P value plus the P = M normalizer cell.
        let mut p_values: Vec<usize> = s
            .conditional
            .iter()
            .cloned()
            .filter(|&p| p >= 1 && p <= m)
            .collect();
        if !p_values.contains(&m) {
            p_values.push(m);
        }
        p_values.sort_unstable();
        p_values.dedup();

        let mut errors: Vec<Vec<f64>> = vec![Vec::new(); p_values.len()];
        for &d in &s.dataset_seeds {
            let reference = {
                let dir = out.join(format!("cells/m{m}_p{m}_d{d}"));
                run_cell(&cell_config(config, SamplerKind::Ipmcmc, m, Some(m), d, dir))?
            };
            for (k, &p) in p_values.iter().enumerate() {
                let err = if p == m {
                    reference
                } else {
                    let dir = out.join(format!("cells/m{m}_p{p}_d{d}"));
                    run_cell(&cell_config(config, SamplerKind::Ipmcmc, m, Some(p), d, dir))?
                };
                errors[k].push(err / reference);
            }
        }
        for (k, &p) in p_values.iter().enumerate() {
            let (q1, q2, q3) = quartiles(&errors[k]);
            rows.push((m, p, q2, q1, q3));
        }
    }

    let mut file = TsvWriter::create(
        &out.join(SWEEP_ERRORS_FILE),
        "sweep",
        "m p median_normalized_error q1 q3",
    )?;
    file.header_line("errors normalized by the P = M cell (multi-start PG)")?;
    for (m, p, q2, q1, q3) in rows {
        file.row([
            TsvField::Uint(m as u64),
            TsvField::Uint(p as u64),
            TsvField::Float(q2),
            TsvField::Float(q1),
            TsvField::Float(q3),
        ])?;
    }
    file.flush()?;
    eprintln!(
        "conditional-count sweep written to {}",
        out.join(SWEEP_ERRORS_FILE).display()
    );
    Ok(())
}

fn run_samplers(config: &SweepConfig) -> Result<(), AppError> {
    let s = &config.sweep;
    let out = &s.output_dir;
    let m = s.nodes[0];
    let mut rows = Vec::new();
    for &sampler in &s.samplers {
        let mut errors = Vec::new();
        for &d in &s.dataset_seeds {
            let dir = out.join(format!("cells/{}_d{d}", sampler.name()));
            let p = match sampler {
                SamplerKind::Ipmcmc => Some(s.conditional[0]),
                _ => None,
            };
            let nodes = match sampler {
                SamplerKind::Pg | SamplerKind::Pimh | SamplerKind::Smc => 1,
                _ => m,
            };
            errors.push(run_cell(&cell_config(config, sampler, nodes, p, d, dir))?);
        }
        let (q1, q2, q3) = quartiles(&errors);
        rows.push((sampler, q2, q1, q3));
    }
    let mut file = TsvWriter::create(
        &out.join(SAMPLER_ERRORS_FILE),
        "sweep",
        "sampler median_mse q1 q3",
    )?;
    for (sampler, q2, q1, q3) in rows {
        file.row([
            TsvField::Str(sampler.name()),
            TsvField::Float(q2),
            TsvField::Float(q1),
            TsvField::Float(q3),
        ])?;
    }
    file.flush()?;
    eprintln!(
        "sampler comparison written to {}",
        out.join(SAMPLER_ERRORS_FILE).display()
    );
    Ok(())
}
