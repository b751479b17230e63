//! Interacting pools of sequential Monte Carlo samplers.
//!
//! This crate implements a particle MCMC sampler built from a pool of `M`
//! nodes that each run a sequential Monte Carlo (SMC) sweep per iteration.
//! `P` of the nodes run *conditional* SMC, pinned to a retained trajectory,
//! and after every round of sweeps the assignment of conditional roles is
//! redrawn by a Gibbs loop driven by the nodes' marginal-likelihood
//! estimates. Switching a conditional role onto a fresh unconditional node
//! is what breaks the path-degeneracy stickiness that plain particle Gibbs
//! suffers from at the early steps of a state sequence.
//!
//! The crate is organised around the pieces needed to run and evaluate the
//! sampler end to end:
//!
//! - [`model`]: the target interface ([`Model`]) plus trajectories and
//!   particle storage shared by every sweep.
//! - [`weights`]: log-domain weight arithmetic.
//! - [`rng`]: seeded, label-derived random streams so that runs are
//!   reproducible under any parallel schedule.
//! - [`smc`]: unconditional and conditional sweep kernels and resampling.
//! - [`engine`]: the interacting node pool, Gibbs index updates, retained
//!   trajectory selection, and the chain driver with pluggable record sinks.
//! - [`baselines`]: multi-start particle Gibbs (PG), particle independent
//!   Metropolis-Hastings (PIMH), and alternating PG for comparison.
//! - [`estimators`]: plain and Rao-Blackwellized expectation estimators,
//!   node weights, and the unique-sample effective sample size.
//! - [`models`]: benchmark state-space models with exact-inference oracles.
//! - [`analysis`]: switching-probability analysis for choosing `P`.
//!
//! All samplers are deterministic functions of their seed and configuration:
//! the same seed gives bit-identical output for any worker count.

pub mod analysis;
pub mod baselines;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod model;
pub mod models;
pub mod rng;
pub mod smc;
pub mod weights;

pub use error::{Error, Result, SweepError, WeightError};
pub use model::{Model, PathView, Trajectory};
pub use rng::{RandomStream, StreamId, StreamRole};
pub use smc::{
    csmc_sweep, marginal_likelihood_estimate, multinomial_resample, smc_sweep, LineageTrace,
    ResamplingScheme, SweepResult,
};
