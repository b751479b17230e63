//! Sweep kernels: unconditional SMC, conditional SMC, and resampling.
//!
//! Both kernels follow the same propose/weight/resample cycle. The particle
//! at step `t` is weighted by
//!
//! ```text
//! w_t = g_t(y_t | x_{1:t}) * f_t(x_t | x_{1:t-1}) / q_t(x_t | x_{1:t-1})
//! ```
//!
//! and resampling draws ancestor slots from the normalized step weights. The
//! conditional variant pins the last slot to a retained trajectory: that slot
//! never resamples its ancestry and its states are copied bit-exactly from
//! the retained path, but it is weighted like any other particle and fresh
//! slots may pick it as a parent.
//!
//! The marginal-likelihood estimate is the product over steps of the mean
//! unnormalized weight, accumulated in log domain.

use crate::error::{SweepError, WeightError};
use crate::model::{Model, ParticleGrid, PathView, Trajectory};
use crate::rng::RandomStream;
use crate::weights::{log_mean_exp, normalize_log_weights, normalize_log_weights_into};

/// Resampling scheme for unconditional sweeps.
///
/// Conditional sweeps always use multinomial resampling; the pool's validity
/// argument needs conditionally i.i.d. ancestor draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// The ancestral lineage of one extracted trajectory: `indices[t]` is the
/// particle slot the path occupied at step `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineageTrace {
    pub indices: Vec<usize>,
}

/// Everything one sweep produced: all particle states, ancestor indices,
/// per-step log-weights, and the log marginal-likelihood estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    particles: ParticleGrid,
    /// `ancestors[t][i]`: parent slot at step `t` of the slot-`i` particle at
    /// step `t + 1`; `steps - 1` rows of `n` entries.
    ancestors: Vec<Vec<u32>>,
    /// Step-major `steps x n` log-weights.
    log_weights: Vec<f64>,
    log_z_hat: f64,
}

impl SweepResult {
    /// Rebuilds a sweep from stored raw output (record files). Shapes and
    /// ancestor ranges are validated; the marginal-likelihood estimate is
    /// recomputed from the weights, so a round-tripped sweep is
    /// indistinguishable from the original.
    pub fn from_parts(
        particles: ParticleGrid,
        ancestors: Vec<Vec<u32>>,
        log_weights: Vec<f64>,
    ) -> Result<Self, SweepError> {
        let steps = particles.steps();
        let n = particles.particles();
        if steps == 0 {
            return Err(SweepError::NoObservations);
        }
        if ancestors.len() != steps - 1 || log_weights.len() != steps * n {
            return Err(SweepError::RetainedLengthMismatch {
                got: ancestors.len() + 1,
                expected: steps,
            });
        }
        for row in &ancestors {
            if row.len() != n {
                return Err(SweepError::TooFewParticles {
                    kind: "reconstructed",
                    min: n,
                    got: row.len(),
                });
            }
            for &a in row {
                if a as usize >= n {
                    return Err(SweepError::IndexOutOfRange {
                        index: a as usize,
                        n,
                    });
                }
            }
        }
        let mut log_z = 0.0;
        for t in 0..steps {
            check_step_weights(&log_weights[t * n..(t + 1) * n], t)?;
            log_z += log_mean_exp(&log_weights[t * n..(t + 1) * n]).expect("validated");
        }
        Ok(SweepResult {
            particles,
            ancestors,
            log_weights,
            log_z_hat: log_z,
        })
    }

    pub fn particle_count(&self) -> usize {
        self.particles.particles()
    }

    pub fn steps(&self) -> usize {
        self.particles.steps()
    }

    pub fn dim(&self) -> usize {
        self.particles.dim()
    }

    /// State of particle slot `i` at step `t`.
    pub fn state(&self, t: usize, i: usize) -> &[f64] {
        self.particles.state(t, i)
    }

    /// Parent slot at step `t` of the slot-`i` particle at step `t + 1`.
    pub fn ancestor(&self, t: usize, i: usize) -> usize {
        self.ancestors[t][i] as usize
    }

    pub fn ancestors(&self) -> &[Vec<u32>] {
        &self.ancestors
    }

    /// Log-weights of all slots at step `t`.
    pub fn log_weights(&self, t: usize) -> &[f64] {
        let n = self.particle_count();
        &self.log_weights[t * n..(t + 1) * n]
    }

    /// The log marginal-likelihood estimate accumulated by the sweep.
    pub fn log_z_hat(&self) -> f64 {
        self.log_z_hat
    }

    /// Normalized weights of the final step; the distribution retained
    /// trajectories are drawn from.
    pub fn final_weights(&self) -> Result<Vec<f64>, WeightError> {
        normalize_log_weights(self.log_weights(self.steps() - 1))
    }

    /// Follows the ancestral lineage backwards from final slot `b` and
    /// returns the full path together with its lineage.
    pub fn extract_trajectory(&self, b: usize) -> Result<(Trajectory, LineageTrace), SweepError> {
        extract_trajectory(self, b)
    }

    /// Resolves every final particle's full path at once.
    ///
    /// Returns a `steps x n` slot matrix: entry `(t, i)` is the slot whose
    /// step-`t` state lies on the path ending in final slot `i`, i.e. the
    /// path of final particle `i` visits `state(t, resolved[t][i])`.
    pub fn resolve_all_paths(&self) -> Vec<Vec<u32>> {
        let steps = self.steps();
        let n = self.particle_count();
        let mut resolved = vec![vec![0u32; n]; steps];
        for i in 0..n {
            resolved[steps - 1][i] = i as u32;
        }
        for t in (0..steps - 1).rev() {
            for i in 0..n {
                resolved[t][i] = self.ancestors[t][resolved[t + 1][i] as usize];
            }
        }
        resolved
    }
}

/// Follows ancestor indices backwards from final slot `b`.
pub fn extract_trajectory(
    sweep: &SweepResult,
    b: usize,
) -> Result<(Trajectory, LineageTrace), SweepError> {
    let n = sweep.particle_count();
    if b >= n {
        return Err(SweepError::IndexOutOfRange { index: b, n });
    }
    let steps = sweep.steps();
    let dim = sweep.dim();
    let mut indices = vec![0usize; steps];
    indices[steps - 1] = b;
    for t in (0..steps - 1).rev() {
        indices[t] = sweep.ancestor(t, indices[t + 1]);
    }
    let mut traj = Trajectory::zeros(dim, steps);
    for (t, &slot) in indices.iter().enumerate() {
        traj.state_mut(t).copy_from_slice(sweep.state(t, slot));
    }
    Ok((traj, LineageTrace { indices }))
}

/// Recomputes the log marginal-likelihood estimate from the stored per-step
/// log-weights. Bit-identical to [`SweepResult::log_z_hat`] by construction.
pub fn marginal_likelihood_estimate(sweep: &SweepResult) -> f64 {
    let mut log_z = 0.0;
    for t in 0..sweep.steps() {
        // Weights were validated during the sweep.
        log_z += log_mean_exp(sweep.log_weights(t)).expect("sweep stores valid weights");
    }
    log_z
}

/// Draws `count` i.i.d. ancestor slots from a normalized probability vector.
pub fn multinomial_resample(
    probs: &[f64],
    count: usize,
    rng: &mut RandomStream,
) -> Result<Vec<u32>, WeightError> {
    if probs.is_empty() {
        return Err(WeightError::Empty);
    }
    let total: f64 = probs.iter().sum();
    if !(total.is_finite()) {
        return Err(WeightError::InvalidWeight(total));
    }
    if (total - 1.0).abs() > 1e-9 {
        if total == 0.0 {
            return Err(WeightError::AllZeroWeights);
        }
        return Err(WeightError::InvalidWeight(total));
    }
    // Cumulative table + binary search keeps zero-probability categories
    // unreachable: their interval has zero width.
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    let mut last_positive = None;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        cum.push(acc);
        if p > 0.0 {
            last_positive = Some(k);
        }
    }
    let last_positive = last_positive.ok_or(WeightError::AllZeroWeights)?;
    let out = (0..count)
        .map(|_| {
            let u = rng.uniform();
            let k = cum.partition_point(|&c| c <= u);
            if k > last_positive {
                last_positive as u32
            } else {
                k as u32
            }
        })
        .collect();
    Ok(out)
}

/// Systematic resampling: one uniform offset, `count` evenly spaced points.
fn systematic_resample(
    probs: &[f64],
    count: usize,
    rng: &mut RandomStream,
) -> Result<Vec<u32>, WeightError> {
    if probs.is_empty() {
        return Err(WeightError::Empty);
    }
    let u0 = rng.uniform() / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut k = 0usize;
    let last = probs.len() - 1;
    for j in 0..count {
        let target = u0 + j as f64 / count as f64;
        while k < last && acc + probs[k] <= target {
            acc += probs[k];
            k += 1;
        }
        out.push(k as u32);
    }
    Ok(out)
}

struct SweepBuffers {
    probs: Vec<f64>,
    proposal: Vec<f64>,
}

/// Runs one unconditional SMC sweep with multinomial resampling.
pub fn smc_sweep(
    model: &dyn Model,
    observations: &[Vec<f64>],
    n: usize,
    rng: &mut RandomStream,
) -> Result<SweepResult, SweepError> {
    smc_sweep_with_scheme(model, observations, n, ResamplingScheme::Multinomial, rng)
}

/// Runs one unconditional SMC sweep with an explicit resampling scheme.
pub fn smc_sweep_with_scheme(
    model: &dyn Model,
    observations: &[Vec<f64>],
    n: usize,
    scheme: ResamplingScheme,
    rng: &mut RandomStream,
) -> Result<SweepResult, SweepError> {
    if n < 1 {
        return Err(SweepError::TooFewParticles {
            kind: "unconditional",
            min: 1,
            got: n,
        });
    }
    run_sweep(model, observations, n, scheme, None, rng)
}

/// Runs one conditional SMC sweep with the last slot pinned to `retained`.
///
/// The pinned slot keeps the retained states and its own ancestry
/// (`a_t = n - 1` at every step); all `n` slots are reweighted, so
/// `extract_trajectory(result, n - 1)` returns `retained` bit-exactly.
pub fn csmc_sweep(
    model: &dyn Model,
    observations: &[Vec<f64>],
    n: usize,
    retained: &Trajectory,
    rng: &mut RandomStream,
) -> Result<SweepResult, SweepError> {
    if n < 2 {
        return Err(SweepError::TooFewParticles {
            kind: "conditional",
            min: 2,
            got: n,
        });
    }
    if retained.len() != observations.len() {
        return Err(SweepError::RetainedLengthMismatch {
            got: retained.len(),
            expected: observations.len(),
        });
    }
    run_sweep(
        model,
        observations,
        n,
        ResamplingScheme::Multinomial,
        Some(retained),
        rng,
    )
}

fn run_sweep(
    model: &dyn Model,
    observations: &[Vec<f64>],
    n: usize,
    scheme: ResamplingScheme,
    retained: Option<&Trajectory>,
    rng: &mut RandomStream,
) -> Result<SweepResult, SweepError> {
    let steps = observations.len();
    if steps == 0 {
        return Err(SweepError::NoObservations);
    }
    let dim = model.dim();
    let mut particles = ParticleGrid::zeros(dim, n, steps);
    let mut ancestors: Vec<Vec<u32>> = Vec::with_capacity(steps.saturating_sub(1));
    let mut log_weights = vec![0.0; steps * n];
    let mut log_z = 0.0;
    let mut buf = SweepBuffers {
        probs: vec![0.0; n],
        proposal: vec![0.0; dim],
    };
    // Free slots propose; the pinned slot (conditional sweeps only) copies
    // the retained state.
    let free = if retained.is_some() { n - 1 } else { n };

    for i in 0..free {
        model.propose_initial(rng, &mut buf.proposal);
        particles.set_state(0, i, &buf.proposal);
    }
    if let Some(path) = retained {
        particles.set_state(0, n - 1, path.state(0));
    }
    for i in 0..n {
        let x = particles.state(0, i);
        let lw = model.log_observation(0, &PathView::new(&particles, &ancestors, 0, i), x, &observations[0])
            + model.log_initial(x)
            - model.log_proposal_initial(x);
        log_weights[i] = lw;
    }
    check_step_weights(&log_weights[..n], 0)?;
    log_z += log_mean_exp(&log_weights[..n]).expect("validated");

    for t in 1..steps {
        normalize_log_weights_into(&log_weights[(t - 1) * n..t * n], &mut buf.probs)
            .map_err(|e| lift_weight_error(e, t))?;
        let mut parents = match (retained, scheme) {
            (None, ResamplingScheme::Systematic) => systematic_resample(&buf.probs, free, rng),
            _ => multinomial_resample(&buf.probs, free, rng),
        }
        .map_err(|e| lift_weight_error(e, t))?;
        if retained.is_some() {
            parents.push((n - 1) as u32);
        }
        ancestors.push(parents);

        for i in 0..free {
            let parent = ancestors[t - 1][i] as usize;
            let history = PathView::new(&particles, &ancestors, t - 1, parent);
            model.propose(t, &history, rng, &mut buf.proposal);
            particles.set_state(t, i, &buf.proposal);
        }
        if let Some(path) = retained {
            particles.set_state(t, n - 1, path.state(t));
        }
        for i in 0..n {
            let parent = ancestors[t - 1][i] as usize;
            let history = PathView::new(&particles, &ancestors, t - 1, parent);
            let x = particles.state(t, i);
            let lw = model.log_observation(t, &history, x, &observations[t])
                + model.log_transition(t, &history, x)
                - model.log_proposal(t, &history, x);
            log_weights[t * n + i] = lw;
        }
        check_step_weights(&log_weights[t * n..(t + 1) * n], t)?;
        log_z += log_mean_exp(&log_weights[t * n..(t + 1) * n]).expect("validated");
    }

    Ok(SweepResult {
        particles,
        ancestors,
        log_weights,
        log_z_hat: log_z,
    })
}

fn check_step_weights(lw: &[f64], t: usize) -> Result<(), SweepError> {
    let mut any_finite = false;
    for &w in lw {
        if w.is_nan() || w == f64::INFINITY {
            return Err(SweepError::InvalidWeight { t, value: w });
        }
        any_finite |= w.is_finite();
    }
    if !any_finite {
        return Err(SweepError::AllZeroWeights { t });
    }
    Ok(())
}

fn lift_weight_error(e: WeightError, t: usize) -> SweepError {
    match e {
        WeightError::AllZeroWeights | WeightError::Empty => SweepError::AllZeroWeights { t },
        WeightError::InvalidWeight(v) => SweepError::InvalidWeight { t, value: v },
    }
}
