//! The `oracle` subcommand: ground-truth files for a model configuration.
//!
//! Linear-Gaussian models get exact smoothed moments from the
//! Rauch-Tung-Striebel pass; the discrete model gets exact marginals by
//! forward-backward; the nonlinear benchmark has no closed form, so its
//! reference is weighted histograms from a few independent high-particle
//! sweeps.

use std::path::Path;

use ipmcmc::models::hmm::forward_backward;
use ipmcmc::models::lgssm::rts_smoother;
use ipmcmc::rng::{RandomStream, StreamId, StreamRole};
use ipmcmc::smc::smc_sweep;
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, ModelSection};
use crate::records::{TsvField, TsvWriter};
use crate::AppError;

pub const RTS_FILE: &str = "oracle_rts.tsv";
pub const MARGINALS_FILE: &str = "oracle_marginals.tsv";
pub const REFERENCE_HISTOGRAMS_FILE: &str = "oracle_histograms.tsv";

fn default_reference_particles() -> usize {
    100_000
}

fn default_reference_sweeps() -> usize {
    5
}

fn default_bins() -> usize {
    50
}

fn default_range() -> [f64; 2] {
    [-30.0, 30.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub output_dir: std::path::PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Particles per reference sweep (nonlinear model only).
    #[serde(default = "default_reference_particles")]
    pub reference_particles: usize,
    #[serde(default = "default_reference_sweeps")]
    pub reference_sweeps: usize,
    /// Steps at which reference histograms are emitted; empty means all of
    /// first, middle, last.
    #[serde(default)]
    pub histogram_steps: Vec<usize>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_range")]
    pub histogram_range: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub oracle: OracleSection,
    pub model: ModelSection,
}

impl OracleConfig {
    pub fn load(path: &Path) -> Result<OracleConfig, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut config: OracleConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        if let Ok(dir) = std::env::var(crate::config::ENV_OUTPUT_DIR) {
            config.oracle.output_dir = std::path::PathBuf::from(dir);
        }
        if config.model.dataset.is_none() && config.model.horizon.unwrap_or(0) == 0 {
            return Err(AppError::Config(
                "model.horizon: must be at least 1 when no dataset file is given".into(),
            ));
        }
        if config.oracle.reference_particles == 0 || config.oracle.reference_sweeps == 0 {
            return Err(AppError::Config(
                "oracle.reference_particles/reference_sweeps: must be at least 1".into(),
            ));
        }
        Ok(config)
    }
}

pub fn cmd_oracle(config_path: &Path) -> Result<(), AppError> {
    let config = OracleConfig::load(config_path)?;
    let workload = config.model.build(false)?;
    let dir = &config.oracle.output_dir;
    std::fs::create_dir_all(dir)?;
    workload
        .dataset
        .save(dir.join(crate::runner::DATASET_FILE))
        .map_err(|e| AppError::Runtime(anyhow::Error::new(e)))?;
    let hash = format!("oracle-{}", workload.dataset.seed);

    match config.model.kind {
        ModelKind::Lgssm | ModelKind::Lgssm1d => {
            let params = workload
                .dataset
                .lgssm_params()
                .map_err(|e| AppError::Runtime(anyhow::Error::new(e)))?;
            let (filter, smooth) = rts_smoother(&params, &workload.observations)
                .map_err(|e| AppError::Runtime(anyhow::Error::new(e)))?;
            let mut file =
                TsvWriter::create(&dir.join(RTS_FILE), &hash, "t dim mean variance")?;
            file.header_line(&format!("log_evidence = {}", filter.log_evidence))?;
            for (t, (mean, cov)) in smooth.means.iter().zip(&smooth.covs).enumerate() {
                for k in 0..mean.len() {
                    file.row([
                        TsvField::Uint(t as u64),
                        TsvField::Uint(k as u64),
                        TsvField::Float(mean[k]),
                        TsvField::Float(cov[(k, k)]),
                    ])?;
                }
            }
            file.flush()?;
        }
        ModelKind::Hmm => {
            let hmm = workload
                .dataset
                .hmm()
                .map_err(|e| AppError::Runtime(anyhow::Error::new(e)))?;
            let symbols = workload.dataset.observation_symbols();
            let (log_evidence, marginals) = forward_backward(&hmm, &symbols);
            let mut file =
                TsvWriter::create(&dir.join(MARGINALS_FILE), &hash, "t state probability")?;
            file.header_line(&format!("log_evidence = {log_evidence}"))?;
            for (t, row) in marginals.iter().enumerate() {
                for (s, p) in row.iter().enumerate() {
                    file.row([
                        TsvField::Uint(t as u64),
                        TsvField::Uint(s as u64),
                        TsvField::Float(*p),
                    ])?;
                }
            }
            file.flush()?;
        }
        ModelKind::Nlssm => {
            write_reference_histograms(&config, &workload, dir, &hash)?;
        }
    }
    eprintln!("oracle files written to {}", dir.display());
    Ok(())
}

/// Smoothing-marginal reference for the nonlinear model: a few independent
/// high-particle sweeps, each contributing its ancestry-resolved paths
/// weighted by final weights.
fn write_reference_histograms(
    config: &OracleConfig,
    workload: &crate::config::Workload,
    dir: &Path,
    hash: &str,
) -> Result<(), AppError> {
    let o = &config.oracle;
    let steps = workload.observations.len();
    let hist_steps: Vec<usize> = if o.histogram_steps.is_empty() {
        vec![0, steps / 2, steps - 1]
    } else {
        for &t in &o.histogram_steps {
            if t >= steps {
                return Err(AppError::Config(format!(
                    "oracle.histogram_steps: step {t} outside 0..{steps}"
                )));
            }
        }
        o.histogram_steps.clone()
    };
    let [lo, hi] = o.histogram_range;
    let bins = o.histogram_bins;
    let width = (hi - lo) / bins as f64;
    let mut totals = vec![vec![0.0f64; bins]; hist_steps.len()];

    for sweep_idx in 0..o.reference_sweeps {
        let mut rng = RandomStream::derive(
            o.seed,
            StreamId::new(StreamRole::Sweep, sweep_idx as u64, u64::MAX),
        );
        let sweep = smc_sweep(
            workload.model.as_ref(),
            &workload.observations,
            o.reference_particles,
            &mut rng,
        )
        .map_err(|e| AppError::Runtime(anyhow::Error::new(e)))?;
        let weights = sweep
            .final_weights()
            .map_err(|e| AppError::Runtime(anyhow::anyhow!("reference sweep: {e}")))?;
        let resolved = sweep.resolve_all_paths();
        for (slot, &t) in hist_steps.iter().enumerate() {
            for (i, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let x = sweep.state(t, resolved[t][i] as usize)[0];
                let k = (((x - lo) / width).floor() as i64).clamp(0, bins as i64 - 1);
                totals[slot][k as usize] += w / o.reference_sweeps as f64;
            }
        }
    }

    let mut file = TsvWriter::create(
        &dir.join(REFERENCE_HISTOGRAMS_FILE),
        hash,
        "t bin_lo bin_hi weight",
    )?;
    file.header_line(&format!(
        "reference: {} sweeps x {} particles",
        o.reference_sweeps, o.reference_particles
    ))?;
    for (slot, &t) in hist_steps.iter().enumerate() {
        for (k, w) in totals[slot].iter().enumerate() {
            file.row([
                TsvField::Uint(t as u64),
                TsvField::Float(lo + k as f64 * width),
                TsvField::Float(lo + (k + 1) as f64 * width),
                TsvField::Float(*w),
            ])?;
        }
    }
    file.flush()?;
    Ok(())
}
