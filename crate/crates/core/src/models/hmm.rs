//! Discrete hidden Markov model with exact posterior enumeration.
//!
//! Small enough state spaces admit brute-force summation over all `S^T`
//! latent paths, which gives an exact joint posterior to hold samplers
//! against. The forward-backward recursion provides a second, independent
//! exact route for cross-checking marginals and evidence.

use crate::error::Error;
use crate::model::{Model, PathView};
use crate::rng::RandomStream;
use crate::weights::log_sum_exp;

/// Hard cap on enumerable path counts.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// A discrete HMM: `S` states, row-stochastic transition and emission tables.
#[derive(Debug, Clone)]
pub struct DiscreteHmm {
    initial: Vec<f64>,
    /// `transition[i][j] = P(state j | state i)`.
    transition: Vec<Vec<f64>>,
    /// `emission[i][k] = P(symbol k | state i)`.
    emission: Vec<Vec<f64>>,
}

impl DiscreteHmm {
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self, Error> {
        let s = initial.len();
        if s == 0 {
            return Err(Error::Model("HMM needs at least one state".into()));
        }
        check_row("initial", &initial)?;
        if transition.len() != s || emission.len() != s {
            return Err(Error::Model(format!(
                "transition/emission must have {s} rows"
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != s {
                return Err(Error::Model(format!("transition row {i} must have {s} entries")));
            }
            check_row(&format!("transition[{i}]"), row)?;
        }
        let symbols = emission[0].len();
        for (i, row) in emission.iter().enumerate() {
            if row.len() != symbols {
                return Err(Error::Model(format!(
                    "emission row {i} must have {symbols} entries"
                )));
            }
            check_row(&format!("emission[{i}]"), row)?;
        }
        Ok(DiscreteHmm {
            initial,
            transition,
            emission,
        })
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn symbols(&self) -> usize {
        self.emission[0].len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &[Vec<f64>] {
        &self.emission
    }

    /// A 2-state, 2-symbol model with distinct, well-conditioned rows; the
    /// standard fixture for exactness tests.
    pub fn two_state_example() -> Self {
        DiscreteHmm::new(
            vec![0.6, 0.4],
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![vec![0.9, 0.1], vec![0.25, 0.75]],
        )
        .expect("valid fixture")
    }

    /// Simulates a latent path and observation sequence of length `t_len`.
    pub fn simulate(&self, t_len: usize, rng: &mut RandomStream) -> (Vec<usize>, Vec<usize>) {
        let mut states = Vec::with_capacity(t_len);
        let mut obs = Vec::with_capacity(t_len);
        let mut state = rng.categorical(&self.initial);
        for t in 0..t_len {
            if t > 0 {
                state = rng.categorical(&self.transition[state]);
            }
            states.push(state);
            obs.push(rng.categorical(&self.emission[state]));
        }
        (states, obs)
    }

    /// Wraps observation symbols into the generic state vector form used by
    /// the sweep kernels.
    pub fn encode_observations(obs: &[usize]) -> Vec<Vec<f64>> {
        obs.iter().map(|&y| vec![y as f64]).collect()
    }

    /// Converts a sampled trajectory (states stored as `f64`) into the flat
    /// path index `sum_t state_t * S^t`.
    pub fn path_index(&self, states: impl Iterator<Item = f64>) -> usize {
        let s = self.states();
        let mut idx = 0usize;
        let mut stride = 1usize;
        for x in states {
            idx += (x as usize) * stride;
            stride *= s;
        }
        idx
    }
}

fn check_row(name: &str, row: &[f64]) -> Result<(), Error> {
    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Model(format!("{name} has entries outside [0, 1]")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Model(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(())
}

impl Model for DiscreteHmm {
    fn dim(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.categorical(&self.initial) as f64;
    }

    fn log_initial(&self, x: &[f64]) -> f64 {
        self.initial[x[0] as usize].ln()
    }

    fn sample_transition(
        &self,
        _t: usize,
        history: &PathView<'_>,
        rng: &mut RandomStream,
        out: &mut [f64],
    ) {
        let prev = history.last()[0] as usize;
        out[0] = rng.categorical(&self.transition[prev]) as f64;
    }

    fn log_transition(&self, _t: usize, history: &PathView<'_>, x: &[f64]) -> f64 {
        let prev = history.last()[0] as usize;
        self.transition[prev][x[0] as usize].ln()
    }

    fn log_observation(&self, _t: usize, _h: &PathView<'_>, x: &[f64], y: &[f64]) -> f64 {
        self.emission[x[0] as usize][y[0] as usize].ln()
    }
}

/// Exact posterior summaries of a discrete HMM given observations.
#[derive(Debug, Clone)]
pub struct HmmExact {
    pub log_evidence: f64,
    /// Posterior probability of every latent path, indexed by
    /// `sum_t state_t * S^t`; length `S^T`.
    pub path_posterior: Vec<f64>,
    /// `marginals[t][s] = P(x_t = s | y_{1:T})`.
    pub marginals: Vec<Vec<f64>>,
}

/// Enumerates all `S^T` latent paths.
pub fn hmm_exact_posterior(hmm: &DiscreteHmm, observations: &[usize]) -> Result<HmmExact, Error> {
    let s = hmm.states();
    let t_len = observations.len();
    if t_len == 0 {
        return Err(Error::Model("empty observation sequence".into()));
    }
    let paths = (s as u64)
        .checked_pow(t_len as u32)
        .filter(|&p| p <= ENUMERATION_LIMIT)
        .ok_or(Error::EnumerationTooLarge {
            states: u64::MAX,
            limit: ENUMERATION_LIMIT,
        })?;

    let mut log_joint = vec![0.0f64; paths as usize];
    let mut states = vec![0usize; t_len];
    for (idx, lj) in log_joint.iter_mut().enumerate() {
        let mut rem = idx;
        for st in states.iter_mut() {
            *st = rem % s;
            rem /= s;
        }
        let mut lp = hmm.initial[states[0]].ln() + hmm.emission[states[0]][observations[0]].ln();
        for t in 1..t_len {
            lp += hmm.transition[states[t - 1]][states[t]].ln()
                + hmm.emission[states[t]][observations[t]].ln();
        }
        *lj = lp;
    }
    let log_evidence = log_sum_exp(&log_joint);
    let path_posterior: Vec<f64> = log_joint
        .iter()
        .map(|&lj| (lj - log_evidence).exp())
        .collect();

    let mut marginals = vec![vec![0.0f64; s]; t_len];
    for (idx, &p) in path_posterior.iter().enumerate() {
        let mut rem = idx;
        for row in marginals.iter_mut() {
            row[rem % s] += p;
            rem /= s;
        }
    }
    Ok(HmmExact {
        log_evidence,
        path_posterior,
        marginals,
    })
}

/// Forward-backward recursion: `(log_evidence, smoothed marginals)`.
///
/// Independent of the enumeration route; used to cross-validate it.
pub fn forward_backward(hmm: &DiscreteHmm, observations: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let s = hmm.states();
    let t_len = observations.len();
    // Scaled forward pass.
    let mut alpha = vec![vec![0.0f64; s]; t_len];
    let mut scales = vec![0.0f64; t_len];
    for i in 0..s {
        alpha[0][i] = hmm.initial[i] * hmm.emission[i][observations[0]];
    }
    scales[0] = alpha[0].iter().sum();
    for i in 0..s {
        alpha[0][i] /= scales[0];
    }
    for t in 1..t_len {
        for j in 0..s {
            let mut a = 0.0;
            for i in 0..s {
                a += alpha[t - 1][i] * hmm.transition[i][j];
            }
            alpha[t][j] = a * hmm.emission[j][observations[t]];
        }
        scales[t] = alpha[t].iter().sum();
        for j in 0..s {
            alpha[t][j] /= scales[t];
        }
    }
    let log_evidence = scales.iter().map(|&c| c.ln()).sum();

    // Backward pass under the same scaling.
    let mut beta = vec![vec![1.0f64; s]; t_len];
    for t in (0..t_len - 1).rev() {
        for i in 0..s {
            let mut b = 0.0;
            for j in 0..s {
                b += hmm.transition[i][j] * hmm.emission[j][observations[t + 1]] * beta[t + 1][j];
            }
            beta[t][i] = b / scales[t + 1];
        }
    }
    let mut marginals = vec![vec![0.0f64; s]; t_len];
    for t in 0..t_len {
        let mut total = 0.0;
        for i in 0..s {
            marginals[t][i] = alpha[t][i] * beta[t][i];
            total += marginals[t][i];
        }
        for i in 0..s {
            marginals[t][i] /= total;
        }
    }
    (log_evidence, marginals)
}
