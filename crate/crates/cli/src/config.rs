//! Experiment configuration: a single TOML file with `[experiment]` and
//! `[model]` sections (plus `[sweep]` for grid runs). Validation reports the
//! offending field by path. Only the output directory and worker count can
//! be overridden from the environment (`IPMCMC_OUTPUT_DIR`,
//! `IPMCMC_WORKER_COUNT`).

use std::path::{Path, PathBuf};

use ipmcmc::model::Model;
use ipmcmc::models::dataset::Dataset;
use ipmcmc::models::hmm::DiscreteHmm;
use ipmcmc::models::lgssm::{lgssm_simulate, make_lgssm, make_lgssm_1d, LgssmModel};
use ipmcmc::models::nlssm::{make_nlssm, nlssm_simulate, NlssmModel, NlssmParams};
use ipmcmc::rng::{RandomStream, StreamId, StreamRole};
use serde::{Deserialize, Serialize};

use crate::AppError;

pub const ENV_OUTPUT_DIR: &str = "IPMCMC_OUTPUT_DIR";
pub const ENV_WORKER_COUNT: &str = "IPMCMC_WORKER_COUNT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ipmcmc,
    Mpg,
    Mpimh,
    Mapg,
    Smc,
    Pg,
    Pimh,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ipmcmc => "ipmcmc",
            SamplerKind::Mpg => "mpg",
            SamplerKind::Mpimh => "mpimh",
            SamplerKind::Mapg => "mapg",
            SamplerKind::Smc => "smc",
            SamplerKind::Pg => "pg",
            SamplerKind::Pimh => "pimh",
        }
    }

    /// Recorded sub-steps per iteration.
    pub fn records_per_iteration(self) -> usize {
        match self {
            SamplerKind::Mapg => 2,
            _ => 1,
        }
    }

    pub fn has_mh_step(self) -> bool {
        matches!(self, SamplerKind::Mpimh | SamplerKind::Mapg | SamplerKind::Pimh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mse,
    Ess,
    #[serde(rename = "switch-rate")]
    SwitchRate,
    Acceptance,
}

fn default_worker_count() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub sampler: SamplerKind,
    pub seed: u64,
    /// MCMC iterations `R` (independent sweeps for the `smc` sampler).
    pub iterations: usize,
    /// Pool nodes / chains `M`.
    pub nodes: usize,
    /// Conditional node count `P` (interacting sampler only).
    pub conditional: Option<usize>,
    /// Particles per sweep `N`.
    pub particles: usize,
    #[serde(default = "default_worker_count")]
    pub worker_count: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub rao_blackwell: bool,
    #[serde(default)]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub dump_particles: bool,
    /// Iterations at which running-estimate errors are tabulated; defaults
    /// to a geometric grid up to `iterations`.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    /// Steps at which weighted marginal histograms are collected.
    #[serde(default)]
    pub histogram_steps: Vec<usize>,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_histogram_range")]
    pub histogram_range: [f64; 2],
}

fn default_histogram_bins() -> usize {
    50
}

fn default_histogram_range() -> [f64; 2] {
    [-30.0, 30.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lgssm,
    Lgssm1d,
    Nlssm,
    Hmm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lgssm => "lgssm",
            ModelKind::Lgssm1d => "lgssm1d",
            ModelKind::Nlssm => "nlssm",
            ModelKind::Hmm => "hmm",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Sequence length when synthesizing; ignored when `dataset` is given.
    pub horizon: Option<usize>,
    /// Seed for dataset synthesis (and the emission matrix for `lgssm`).
    #[serde(default)]
    pub dataset_seed: u64,
    /// Load this dataset file instead of synthesizing.
    pub dataset: Option<PathBuf>,
    /// Scalar model parameters (`lgssm1d`, `nlssm`); defaults are the
    /// benchmark values.
    pub mu: Option<f64>,
    pub v: Option<f64>,
    pub alpha: Option<f64>,
    pub omega: Option<f64>,
    pub beta: Option<f64>,
    pub sigma: Option<f64>,
    /// Explicit tables for `hmm`; defaults to the built-in two-state model.
    pub initial: Option<Vec<f64>>,
    pub transition: Option<Vec<Vec<f64>>>,
    pub emission: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        config.apply_env_overrides()?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env_overrides(&mut self) -> Result<(), AppError> {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            self.experiment.output_dir = PathBuf::from(dir);
        }
        if let Ok(workers) = std::env::var(ENV_WORKER_COUNT) {
            self.experiment.worker_count = workers.parse().map_err(|_| {
                AppError::Config(format!("{ENV_WORKER_COUNT}: not a valid worker count: {workers}"))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let e = &self.experiment;
        let fail = |field: &str, msg: String| Err(AppError::Config(format!("{field}: {msg}")));
        if e.iterations == 0 {
            return fail("experiment.iterations", "must be at least 1".into());
        }
        if e.nodes == 0 {
            return fail("experiment.nodes", "must be at least 1".into());
        }
        if e.particles < 2 && e.sampler != SamplerKind::Smc {
            return fail("experiment.particles", "must be at least 2".into());
        }
        if e.particles == 0 {
            return fail("experiment.particles", "must be at least 1".into());
        }
        if e.worker_count == 0 {
            return fail("experiment.worker_count", "must be at least 1".into());
        }
        match e.sampler {
            SamplerKind::Ipmcmc => {
                let p = e.conditional.ok_or_else(|| {
                    AppError::Config(
                        "experiment.conditional: required for the ipmcmc sampler".into(),
                    )
                })?;
                if p == 0 || p > e.nodes {
                    return fail(
                        "experiment.conditional",
                        format!("must satisfy 1 <= P <= nodes, got P={p} with M={}", e.nodes),
                    );
                }
            }
            SamplerKind::Pg | SamplerKind::Pimh | SamplerKind::Smc => {
                if e.conditional.is_some() {
                    return fail(
                        "experiment.conditional",
                        format!("not accepted by the {} sampler", e.sampler.name()),
                    );
                }
                if e.nodes != 1 {
                    return fail(
                        "experiment.nodes",
                        format!("the {} sampler is single-chain; set nodes = 1", e.sampler.name()),
                    );
                }
            }
            SamplerKind::Mpg | SamplerKind::Mpimh | SamplerKind::Mapg => {
                if e.conditional.is_some() {
                    return fail(
                        "experiment.conditional",
                        format!("not accepted by the {} sampler", e.sampler.name()),
                    );
                }
            }
        }
        for &c in &e.checkpoints {
            if c == 0 || c > e.iterations {
                return fail(
                    "experiment.checkpoints",
                    format!("checkpoint {c} outside 1..={}", e.iterations),
                );
            }
        }
        if e.histogram_bins == 0 {
            return fail("experiment.histogram_bins", "must be at least 1".into());
        }
        if e.histogram_range[0] >= e.histogram_range[1] {
            return fail(
                "experiment.histogram_range",
                "lower bound must be below upper bound".into(),
            );
        }

        let m = &self.model;
        if m.dataset.is_none() && m.horizon.unwrap_or(0) == 0 {
            return fail(
                "model.horizon",
                "must be at least 1 when no dataset file is given".into(),
            );
        }
        if e.metrics.contains(&MetricKind::Mse) && m.kind == ModelKind::Nlssm {
            return fail(
                "experiment.metrics",
                "mse needs an exact oracle; the nlssm model has none".into(),
            );
        }
        if e.metrics.contains(&MetricKind::SwitchRate) && e.sampler != SamplerKind::Ipmcmc {
            return fail(
                "experiment.metrics",
                format!("switch-rate applies to the ipmcmc sampler, not {}", e.sampler.name()),
            );
        }
        if e.metrics.contains(&MetricKind::Acceptance) && !e.sampler.has_mh_step() {
            return fail(
                "experiment.metrics",
                format!("acceptance applies to MH samplers, not {}", e.sampler.name()),
            );
        }
        if !e.histogram_steps.is_empty() {
            if let Some(horizon) = m.horizon {
                for &t in &e.histogram_steps {
                    if t >= horizon {
                        return fail(
                            "experiment.histogram_steps",
                            format!("step {t} outside 0..{horizon}"),
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// Effective checkpoints: configured ones, or a geometric default grid,
    /// always ending at `iterations`.
    pub fn effective_checkpoints(&self) -> Vec<usize> {
        let r = self.experiment.iterations;
        let mut points = if self.experiment.checkpoints.is_empty() {
            let mut points = Vec::new();
            let mut c = 1usize;
            while c < r {
                points.push(c);
                c = (c * 2).max(c + 1);
            }
            points
        } else {
            self.experiment.checkpoints.clone()
        };
        if !points.contains(&r) {
            points.push(r);
        }
        points.sort_unstable();
        points.dedup();
        points
    }
}

/// A model instance with its dataset and, when available, exact posterior
/// means for error metrics.
pub struct Workload {
    pub model: Box<dyn Model>,
    pub dataset: Dataset,
    pub observations: Vec<Vec<f64>>,
    /// Exact smoothed mean per step and dimension.
    pub truth: Option<Vec<Vec<f64>>>,
}

impl ModelSection {
    fn nlssm_params(&self) -> NlssmParams {
        let defaults = make_nlssm().0;
        NlssmParams {
            mu: self.mu.unwrap_or(defaults.mu),
            v: self.v.unwrap_or(defaults.v),
            omega: self.omega.unwrap_or(defaults.omega),
            sigma: self.sigma.unwrap_or(defaults.sigma),
        }
    }

    fn hmm(&self) -> Result<DiscreteHmm, AppError> {
        match (&self.initial, &self.transition, &self.emission) {
            (None, None, None) => Ok(DiscreteHmm::two_state_example()),
            (Some(initial), Some(transition), Some(emission)) => {
                DiscreteHmm::new(initial.clone(), transition.clone(), emission.clone())
                    .map_err(|e| AppError::Config(format!("model: {e}")))
            }
            _ => Err(AppError::Config(
                "model: initial, transition and emission must be given together".into(),
            )),
        }
    }

    /// Builds the model and dataset this section describes. Synthetic data
    /// is derived from `dataset_seed` unless a dataset file is supplied.
    pub fn build(&self, want_truth: bool) -> Result<Workload, AppError> {
        if let Some(path) = &self.dataset {
            let dataset = Dataset::load(path)
                .map_err(|e| AppError::Config(format!("model.dataset: {e}")))?;
            return workload_from_dataset(dataset, want_truth);
        }
        let horizon = self.horizon.unwrap_or(0);
        let seed = self.dataset_seed;
        let dataset = match self.kind {
            ModelKind::Lgssm => {
                let (params, _) = make_lgssm(seed);
                let mut rng =
                    RandomStream::derive(seed, StreamId::new(StreamRole::Dataset, 1, 0));
                let (latents, observations) = lgssm_simulate(&params, horizon, &mut rng)
                    .map_err(|e| AppError::Config(format!("model: {e}")))?;
                Dataset::from_lgssm(&params, seed, latents, observations)
            }
            ModelKind::Lgssm1d => {
                let (params, _) = make_lgssm_1d(
                    self.mu.unwrap_or(0.3),
                    self.v.unwrap_or(0.8),
                    self.alpha.unwrap_or(0.85),
                    self.omega.unwrap_or(0.6),
                    self.beta.unwrap_or(1.2),
                    self.sigma.unwrap_or(0.5),
                );
                let mut rng =
                    RandomStream::derive(seed, StreamId::new(StreamRole::Dataset, 1, 0));
                let (latents, observations) = lgssm_simulate(&params, horizon, &mut rng)
                    .map_err(|e| AppError::Config(format!("model: {e}")))?;
                let mut ds = Dataset::from_lgssm(&params, seed, latents, observations);
                ds.kind = "lgssm".into();
                ds
            }
            ModelKind::Nlssm => {
                let params = self.nlssm_params();
                params
                    .validate()
                    .map_err(|e| AppError::Config(format!("model: {e}")))?;
                let mut rng =
                    RandomStream::derive(seed, StreamId::new(StreamRole::Dataset, 2, 0));
                let (latents, observations) = nlssm_simulate(&params, horizon, &mut rng)
                    .map_err(|e| AppError::Config(format!("model: {e}")))?;
                Dataset::from_nlssm(&params, seed, latents, observations)
            }
            ModelKind::Hmm => {
                let hmm = self.hmm()?;
                let mut rng =
                    RandomStream::derive(seed, StreamId::new(StreamRole::Dataset, 3, 0));
                let (states, symbols) = hmm.simulate(horizon, &mut rng);
                Dataset::from_hmm(&hmm, seed, &states, &symbols)
            }
        };
        workload_from_dataset(dataset, want_truth)
    }
}

/// Reconstructs the model from a dataset file and computes exact smoothed
/// means when the model has an oracle.
pub fn workload_from_dataset(dataset: Dataset, want_truth: bool) -> Result<Workload, AppError> {
    let to_runtime = |e: ipmcmc::Error| AppError::Runtime(anyhow::Error::new(e));
    match dataset.kind.as_str() {
        "lgssm" => {
            let params = dataset.lgssm_params().map_err(to_runtime)?;
            let truth = if want_truth {
                let (_, smooth) =
                    ipmcmc::models::lgssm::rts_smoother(&params, &dataset.observations)
                        .map_err(to_runtime)?;
                Some(
                    smooth
                        .means
                        .iter()
                        .map(|m| m.iter().cloned().collect())
                        .collect(),
                )
            } else {
                None
            };
            let model = LgssmModel::new(params).map_err(to_runtime)?;
            Ok(Workload {
                model: Box::new(model),
                observations: dataset.observations.clone(),
                dataset,
                truth,
            })
        }
        "nlssm" => {
            let params = dataset.nlssm_params().map_err(to_runtime)?;
            let model = NlssmModel::new(params).map_err(to_runtime)?;
            Ok(Workload {
                model: Box::new(model),
                observations: dataset.observations.clone(),
                dataset,
                truth: None,
            })
        }
        "hmm" => {
            let hmm = dataset.hmm().map_err(to_runtime)?;
            let symbols = dataset.observation_symbols();
            let truth = if want_truth {
                let (_, marginals) = ipmcmc::models::hmm::forward_backward(&hmm, &symbols);
                Some(
                    marginals
                        .iter()
                        .map(|row| {
                            vec![row
                                .iter()
                                .enumerate()
                                .map(|(s, p)| s as f64 * p)
                                .sum::<f64>()]
                        })
                        .collect(),
                )
            } else {
                None
            };
            let observations = DiscreteHmm::encode_observations(&symbols);
            Ok(Workload {
                model: Box::new(hmm),
                observations,
                dataset,
                truth,
            })
        }
        other => Err(AppError::Config(format!(
            "model.dataset: unknown model kind '{other}'"
        ))),
    }
}
