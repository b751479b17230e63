//! The `run` subcommand: execute one experiment and write all artifacts.

use std::path::Path;
use std::time::Instant;

use ipmcmc::baselines::{
    run_multi_start, BaselineChainSummary, BaselineKind, BaselineSink, ChainRecord,
    MultiStartConfig,
};
use ipmcmc::engine::{run_chain, select_retained, ChainSummary, PoolConfig, RecordSink};
use ipmcmc::error::Error;
use ipmcmc::model::{Model, Trajectory};
use ipmcmc::rng::{RandomStream, StreamId, StreamRole};
use ipmcmc::smc::{smc_sweep, SweepResult};

use crate::config::{MetricKind, RunConfig, SamplerKind};
use crate::manifest::write_manifest;
use crate::metrics::{
    write_metric_files, ChainMetrics, MetricPlan, MetricReport, PoolMetrics, RunSummaryInfo,
};
use crate::records::{ChainFileSink, PoolFileSink};
use crate::AppError;

pub const DATASET_FILE: &str = "dataset.tsv";

/// Fans one baseline record stream out to several sinks.
struct Tee<'a>(Vec<&'a mut dyn BaselineSink>);

impl BaselineSink for Tee<'_> {
    fn on_init(
        &mut self,
        chain: usize,
        sweep: &SweepResult,
        retained: &Trajectory,
    ) -> Result<(), Error> {
        for sink in &mut self.0 {
            sink.on_init(chain, sweep, retained)?;
        }
        Ok(())
    }

    fn on_step(&mut self, record: &ChainRecord, system: &SweepResult) -> Result<(), Error> {
        for sink in &mut self.0 {
            sink.on_step(record, system)?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), Error> {
        for sink in &mut self.0 {
            sink.finish()?;
        }
        Ok(())
    }
}

pub struct RunOutcome {
    pub report: MetricReport,
    pub info: RunSummaryInfo,
}

pub fn cmd_run(config_path: &Path) -> Result<(), AppError> {
    let config = RunConfig::load(config_path)?;
    run_with_config(&config).map(|_| ())
}

/// Runs one fully validated configuration; shared with the sweep command.
pub fn run_with_config(config: &RunConfig) -> Result<RunOutcome, AppError> {
    let started = Instant::now();
    let e = &config.experiment;
    let want_truth = e.metrics.contains(&MetricKind::Mse);
    let workload = config.model.build(want_truth)?;
    let steps = workload.observations.len();
    let dim = workload.model.dim();
    for &t in &e.histogram_steps {
        if t >= steps {
            return Err(AppError::Config(format!(
                "experiment.histogram_steps: step {t} outside 0..{steps}"
            )));
        }
    }

    let dir = &e.output_dir;
    std::fs::create_dir_all(dir)?;
    let hash = write_manifest(dir, config)?;
    workload
        .dataset
        .save(dir.join(DATASET_FILE))
        .map_err(|err| AppError::Runtime(anyhow::Error::new(err)))?;

    let plan = MetricPlan::from_config(config, steps, dim);
    let mut info = RunSummaryInfo {
        sampler: e.sampler,
        iterations: e.iterations,
        nodes: e.nodes,
        conditional: e.conditional,
        particles: e.particles,
        switch_count: None,
        accept_count: None,
        mh_steps: None,
        scalar_messages: None,
        trajectory_messages: None,
        histogram_bins: e.histogram_bins,
        histogram_range: e.histogram_range,
    };

    let report = match e.sampler {
        SamplerKind::Ipmcmc => {
            let pool_config = PoolConfig {
                nodes: e.nodes,
                conditional: e.conditional.expect("validated"),
                particles: e.particles,
                iterations: e.iterations,
                seed: e.seed,
                worker_count: e.worker_count,
            };
            let mut files = PoolFileSink::create(dir, &hash, e.dump_particles)?;
            let mut metrics = PoolMetrics::new(plan, pool_config.conditional, pool_config.nodes);
            let summary: ChainSummary = {
                let mut sinks: [&mut dyn RecordSink; 2] = [&mut files, &mut metrics];
                run_chain(
                    &pool_config,
                    workload.model.as_ref(),
                    &workload.observations,
                    None,
                    &mut sinks,
                )?
            };
            info.switch_count = Some(summary.switch_count);
            info.scalar_messages = Some(summary.scalar_messages);
            info.trajectory_messages = Some(summary.trajectory_messages);
            eprintln!(
                "ipmcmc: {} iterations, switch rate {:.3}, wall {:.2?}",
                summary.iterations,
                summary.switch_rate(),
                summary.wall
            );
            metrics.into_report()
        }
        SamplerKind::Mpg | SamplerKind::Mpimh | SamplerKind::Mapg | SamplerKind::Pg
        | SamplerKind::Pimh => {
            let kind = match e.sampler {
                SamplerKind::Mpg | SamplerKind::Pg => BaselineKind::Pg,
                SamplerKind::Mpimh | SamplerKind::Pimh => BaselineKind::Pimh,
                SamplerKind::Mapg => BaselineKind::Apg,
                SamplerKind::Ipmcmc | SamplerKind::Smc => unreachable!(),
            };
            let ms = MultiStartConfig {
                chains: e.nodes,
                particles: e.particles,
                iterations: e.iterations,
                seed: e.seed,
            };
            let mut files = ChainFileSink::create(dir, &hash, e.dump_particles)?;
            let mut metrics = ChainMetrics::new(plan);
            let summaries: Vec<BaselineChainSummary> = {
                let mut tee = Tee(vec![&mut files, &mut metrics]);
                run_multi_start(
                    kind,
                    &ms,
                    workload.model.as_ref(),
                    &workload.observations,
                    &mut tee,
                )?
            };
            let accept: usize = summaries.iter().map(|s| s.accept_count).sum();
            let mh: usize = summaries.iter().map(|s| s.mh_steps).sum();
            if e.sampler.has_mh_step() {
                info.accept_count = Some(accept);
                info.mh_steps = Some(mh);
                eprintln!(
                    "{}: {} chains, acceptance rate {:.3}",
                    e.sampler.name(),
                    e.nodes,
                    accept as f64 / mh.max(1) as f64
                );
            }
            metrics.into_report()
        }
        SamplerKind::Smc => {
            let mut files = ChainFileSink::create(dir, &hash, e.dump_particles)?;
            let mut metrics = ChainMetrics::new(plan);
            run_independent_sweeps(config, workload.model.as_ref(), &workload.observations, &mut [
                &mut files,
                &mut metrics,
            ])?;
            metrics.into_report()
        }
    };

    write_metric_files(dir, &hash, &report, workload.truth.as_deref(), &info)?;
    eprintln!(
        "run complete: {} -> {} ({:.2?})",
        e.sampler.name(),
        dir.display(),
        started.elapsed()
    );
    Ok(RunOutcome { report, info })
}

/// R independent unconditional sweeps, recorded like a single chain whose
/// state is redrawn from scratch every iteration.
fn run_independent_sweeps(
    config: &RunConfig,
    model: &dyn Model,
    observations: &[Vec<f64>],
    sinks: &mut [&mut dyn BaselineSink],
) -> Result<(), AppError> {
    let e = &config.experiment;
    for r in 1..=e.iterations {
        let mut sweep_rng =
            RandomStream::derive(e.seed, StreamId::new(StreamRole::Sweep, r as u64, 0));
        let sweep = smc_sweep(model, observations, e.particles, &mut sweep_rng)
            .map_err(|err| AppError::Runtime(anyhow::Error::new(err)))?;
        let mut select_rng =
            RandomStream::derive(e.seed, StreamId::new(StreamRole::Select, r as u64, 0));
        let (_, trajectory, _) = select_retained(&sweep, &mut select_rng)
            .map_err(|err| AppError::Runtime(anyhow::Error::new(err)))?;
        let record = ChainRecord {
            chain: 0,
            iteration: r,
            phase: 0,
            retained: trajectory,
            log_z: sweep.log_z_hat(),
            accepted: None,
        };
        for sink in sinks.iter_mut() {
            sink.on_step(&record, &sweep)
                .map_err(|err| AppError::Runtime(anyhow::Error::new(err)))?;
        }
    }
    for sink in sinks.iter_mut() {
        sink.finish()
            .map_err(|err| AppError::Runtime(anyhow::Error::new(err)))?;
    }
    Ok(())
}
