//! Multi-start baseline samplers: PG, PIMH and alternating PG.
//!
//! These are the non-interacting comparison points: `M` independent chains
//! run in parallel and their outputs are pooled with equal node weights.
//! All three share the sweep kernels and the stream-labeling scheme of the
//! interacting engine, so a multi-start PG run with the same seed is
//! bit-identical to the interacting sampler in its degenerate `P = M`
//! configuration.

use crate::engine::select_retained;
use crate::error::Error;
use crate::model::{Model, Trajectory};
use crate::rng::{RandomStream, StreamId, StreamRole};
use crate::smc::{csmc_sweep, smc_sweep, SweepResult};

/// Which baseline sampler to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Particle Gibbs: conditional sweep, then redraw the retained particle.
    Pg,
    /// Particle independent Metropolis-Hastings: propose a whole fresh
    /// particle system, accept by the likelihood-estimate ratio.
    Pimh,
    /// Alternating PG: one PG step then one PIMH step per iteration.
    Apg,
}

/// One recorded sub-step of a baseline chain.
#[derive(Debug, Clone)]
pub struct ChainRecord {
    pub chain: usize,
    pub iteration: usize,
    /// 0 for the PG half (or the only sub-step); 1 for the PIMH half of an
    /// alternating iteration.
    pub phase: usize,
    pub retained: Trajectory,
    /// Marginal-likelihood estimate attached to the chain's current system.
    pub log_z: f64,
    /// Present exactly when the sub-step performed an accept/reject test.
    pub accepted: Option<bool>,
}

/// Output of one PG step.
#[derive(Debug, Clone)]
pub struct PgOutcome {
    pub retained: Trajectory,
    /// Final-weight index the new retained trajectory was drawn at.
    pub b: usize,
    pub sweep: SweepResult,
}

/// Runs one PG step: a conditional sweep pinned to `retained`, then a fresh
/// retained draw from the final weights.
pub fn pg_step(
    retained: &Trajectory,
    model: &dyn Model,
    observations: &[Vec<f64>],
    particles: usize,
    sweep_rng: &mut RandomStream,
    select_rng: &mut RandomStream,
) -> Result<PgOutcome, Error> {
    let sweep = csmc_sweep(model, observations, particles, retained, sweep_rng)?;
    let (b, retained, _) = select_retained(&sweep, select_rng)?;
    Ok(PgOutcome { retained, b, sweep })
}

/// Chain state carried between PIMH (and APG) steps.
#[derive(Debug, Clone)]
pub struct PimhState {
    pub trajectory: Trajectory,
    pub log_z: f64,
}

/// Output of one PIMH step. `proposal` is the freshly proposed system
/// regardless of acceptance; the chain's current system only changes when
/// `accepted` is true.
#[derive(Debug, Clone)]
pub struct PimhOutcome {
    pub state: PimhState,
    pub accepted: bool,
    pub proposal: SweepResult,
}

/// Standard Metropolis-Hastings accept test on a log ratio.
pub fn mh_accept(log_ratio: f64, rng: &mut RandomStream) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    rng.uniform() < log_ratio.exp()
}

/// Runs one PIMH step: propose a whole new particle system via an
/// unconditional sweep and accept with probability
/// `min(1, Z_prop / Z_cur)`.
pub fn pimh_step(
    current: &PimhState,
    model: &dyn Model,
    observations: &[Vec<f64>],
    particles: usize,
    sweep_rng: &mut RandomStream,
    select_rng: &mut RandomStream,
    accept_rng: &mut RandomStream,
) -> Result<PimhOutcome, Error> {
    if !current.log_z.is_finite() {
        return Err(Error::Config(format!(
            "current log marginal likelihood must be finite, got {}",
            current.log_z
        )));
    }
    let proposal = smc_sweep(model, observations, particles, sweep_rng)?;
    let (_, trajectory, _) = select_retained(&proposal, select_rng)?;
    let accepted = mh_accept(proposal.log_z_hat() - current.log_z, accept_rng);
    let state = if accepted {
        PimhState {
            log_z: proposal.log_z_hat(),
            trajectory,
        }
    } else {
        current.clone()
    };
    Ok(PimhOutcome {
        state,
        accepted,
        proposal,
    })
}

/// Output of one alternating step: the PG half followed by the PIMH half.
#[derive(Debug, Clone)]
pub struct ApgOutcome {
    pub pg: PgOutcome,
    pub pimh: PimhOutcome,
}

/// Runs one alternating PG step: a PG update whose conditional sweep also
/// refreshes the chain's likelihood estimate, then a PIMH update from there.
#[allow(clippy::too_many_arguments)]
pub fn apg_step(
    state: &PimhState,
    model: &dyn Model,
    observations: &[Vec<f64>],
    particles: usize,
    pg_sweep_rng: &mut RandomStream,
    pg_select_rng: &mut RandomStream,
    pimh_sweep_rng: &mut RandomStream,
    pimh_select_rng: &mut RandomStream,
    accept_rng: &mut RandomStream,
) -> Result<ApgOutcome, Error> {
    let pg = pg_step(
        &state.trajectory,
        model,
        observations,
        particles,
        pg_sweep_rng,
        pg_select_rng,
    )?;
    let mid = PimhState {
        trajectory: pg.retained.clone(),
        log_z: pg.sweep.log_z_hat(),
    };
    let pimh = pimh_step(
        &mid,
        model,
        observations,
        particles,
        pimh_sweep_rng,
        pimh_select_rng,
        accept_rng,
    )?;
    Ok(ApgOutcome { pg, pimh })
}

/// Consumer of multi-start chain output.
///
/// `on_step` receives each recorded sub-step together with the chain's
/// current particle system (after the sub-step), which is what mixing
/// diagnostics consume: for PG the iteration's conditional sweep, for PIMH
/// the currently accepted system.
pub trait BaselineSink {
    fn on_init(
        &mut self,
        _chain: usize,
        _sweep: &SweepResult,
        _retained: &Trajectory,
    ) -> Result<(), Error> {
        Ok(())
    }

    fn on_step(&mut self, record: &ChainRecord, current_system: &SweepResult)
        -> Result<(), Error>;

    fn finish(&mut self) -> Result<(), Error> {
        Ok(())
    }
}

/// Collects records in memory, dropping the particle systems.
#[derive(Debug, Default)]
pub struct MemoryBaselineSink {
    pub records: Vec<ChainRecord>,
    pub finished: bool,
}

impl BaselineSink for MemoryBaselineSink {
    fn on_step(&mut self, record: &ChainRecord, _system: &SweepResult) -> Result<(), Error> {
        self.records.push(record.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<(), Error> {
        self.finished = true;
        Ok(())
    }
}

/// Multi-start run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiStartConfig {
    pub chains: usize,
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl MultiStartConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.chains == 0 {
            return Err(Error::Config("chains: must be at least 1".into()));
        }
        if self.particles < 2 {
            return Err(Error::Config("particles: must be at least 2".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations: must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-chain summary of a multi-start run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineChainSummary {
    pub chain: usize,
    pub iterations: usize,
    /// Accepted MH tests (PIMH and APG only).
    pub accept_count: usize,
    /// MH tests performed.
    pub mh_steps: usize,
}

impl BaselineChainSummary {
    pub fn acceptance_rate(&self) -> f64 {
        if self.mh_steps == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.mh_steps as f64
        }
    }
}

/// Runs `chains` seed-separated independent chains of the given sampler,
/// streaming every recorded sub-step to the sink.
///
/// Chain `m` at iteration `r` consumes exactly the streams
/// `(Sweep, r, m)`, `(Select, r, m)` (and `(Accept, r, m)` for MH tests);
/// alternating steps use phase 1 labels for their PIMH half. Iteration 0 is
/// the initialization sweep.
pub fn run_multi_start(
    kind: BaselineKind,
    config: &MultiStartConfig,
    model: &dyn Model,
    observations: &[Vec<f64>],
    sink: &mut dyn BaselineSink,
) -> Result<Vec<BaselineChainSummary>, Error> {
    config.validate()?;
    let outcome = (|| {
        let mut summaries = Vec::with_capacity(config.chains);
        for chain in 0..config.chains {
            summaries.push(run_single_chain(kind, chain, config, model, observations, sink)?);
        }
        Ok(summaries)
    })();
    match outcome {
        Ok(summaries) => {
            sink.finish()?;
            Ok(summaries)
        }
        Err(e) => {
            let _ = sink.finish();
            Err(e)
        }
    }
}

fn stream(seed: u64, role: StreamRole, r: usize, chain: usize, phase: u64) -> RandomStream {
    RandomStream::derive(
        seed,
        StreamId::new(role, r as u64, chain as u64).with_phase(phase),
    )
}

fn run_single_chain(
    kind: BaselineKind,
    chain: usize,
    config: &MultiStartConfig,
    model: &dyn Model,
    observations: &[Vec<f64>],
    sink: &mut dyn BaselineSink,
) -> Result<BaselineChainSummary, Error> {
    // Initialization: an unconditional sweep plus a retained draw, shared by
    // all three samplers.
    let init_sweep = {
        let mut rng = stream(config.seed, StreamRole::Sweep, 0, chain, 0);
        smc_sweep(model, observations, config.particles, &mut rng)?
    };
    let (_, init_retained, _) = {
        let mut rng = stream(config.seed, StreamRole::Select, 0, chain, 0);
        select_retained(&init_sweep, &mut rng)?
    };
    sink.on_init(chain, &init_sweep, &init_retained)?;

    let mut accept_count = 0usize;
    let mut mh_steps = 0usize;
    let mut state = PimhState {
        log_z: init_sweep.log_z_hat(),
        trajectory: init_retained,
    };
    // The chain's current particle system; replaced per step for PG, only on
    // acceptance for PIMH.
    let mut current = init_sweep;

    for r in 1..=config.iterations {
        match kind {
            BaselineKind::Pg => {
                let mut sweep_rng = stream(config.seed, StreamRole::Sweep, r, chain, 0);
                let mut select_rng = stream(config.seed, StreamRole::Select, r, chain, 0);
                let out = pg_step(
                    &state.trajectory,
                    model,
                    observations,
                    config.particles,
                    &mut sweep_rng,
                    &mut select_rng,
                )?;
                state = PimhState {
                    log_z: out.sweep.log_z_hat(),
                    trajectory: out.retained,
                };
                current = out.sweep;
                sink.on_step(
                    &ChainRecord {
                        chain,
                        iteration: r,
                        phase: 0,
                        retained: state.trajectory.clone(),
                        log_z: state.log_z,
                        accepted: None,
                    },
                    &current,
                )?;
            }
            BaselineKind::Pimh => {
                let mut sweep_rng = stream(config.seed, StreamRole::Sweep, r, chain, 0);
                let mut select_rng = stream(config.seed, StreamRole::Select, r, chain, 0);
                let mut accept_rng = stream(config.seed, StreamRole::Accept, r, chain, 0);
                let out = pimh_step(
                    &state,
                    model,
                    observations,
                    config.particles,
                    &mut sweep_rng,
                    &mut select_rng,
                    &mut accept_rng,
                )?;
                mh_steps += 1;
                accept_count += out.accepted as usize;
                if out.accepted {
                    current = out.proposal;
                }
                state = out.state;
                sink.on_step(
                    &ChainRecord {
                        chain,
                        iteration: r,
                        phase: 0,
                        retained: state.trajectory.clone(),
                        log_z: state.log_z,
                        accepted: Some(out.accepted),
                    },
                    &current,
                )?;
            }
            BaselineKind::Apg => {
                let mut pg_sweep_rng = stream(config.seed, StreamRole::Sweep, r, chain, 0);
                let mut pg_select_rng = stream(config.seed, StreamRole::Select, r, chain, 0);
                let mut pimh_sweep_rng = stream(config.seed, StreamRole::Sweep, r, chain, 1);
                let mut pimh_select_rng = stream(config.seed, StreamRole::Select, r, chain, 1);
                let mut accept_rng = stream(config.seed, StreamRole::Accept, r, chain, 1);
                let out = apg_step(
                    &state,
                    model,
                    observations,
                    config.particles,
                    &mut pg_sweep_rng,
                    &mut pg_select_rng,
                    &mut pimh_sweep_rng,
                    &mut pimh_select_rng,
                    &mut accept_rng,
                )?;
                current = out.pg.sweep;
                sink.on_step(
                    &ChainRecord {
                        chain,
                        iteration: r,
                        phase: 0,
                        retained: out.pg.retained.clone(),
                        log_z: current.log_z_hat(),
                        accepted: None,
                    },
                    &current,
                )?;
                mh_steps += 1;
                accept_count += out.pimh.accepted as usize;
                if out.pimh.accepted {
                    current = out.pimh.proposal;
                }
                state = out.pimh.state;
                sink.on_step(
                    &ChainRecord {
                        chain,
                        iteration: r,
                        phase: 1,
                        retained: state.trajectory.clone(),
                        log_z: state.log_z,
                        accepted: Some(out.pimh.accepted),
                    },
                    &current,
                )?;
            }
        }
    }
    Ok(BaselineChainSummary {
        chain,
        iterations: config.iterations,
        accept_count,
        mh_steps,
    })
}
