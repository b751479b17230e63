//! Switching-probability analysis for choosing the conditional count `P`.
//!
//! The probability that at least one conditional slot hands its role to an
//! unconditional node in a given iteration is
//!
//! ```text
//! P(switch) = 1 - E[ prod_j Z_cj / (Z_cj + sum_{m not in c} Z_m) ]
//! ```
//!
//! With all likelihood estimates equal this collapses to the closed form
//! `1 - (M - P + 1)^(-P)`. Under the log-normal limit for the estimates
//! (conditional nodes biased up by `sigma^2 / 2`, unconditional down by the
//! same) the expectation is estimated by Monte Carlo; the curve over `P` is
//! unimodal with its maximum near `M / 2`.

use rayon::prelude::*;

use crate::engine::ChainSummary;
use crate::error::Error;
use crate::rng::{RandomStream, StreamId, StreamRole};
use crate::weights::log_sum_exp;

/// Log-normal limiting model for the marginal-likelihood estimates, with
/// the true constant normalized to one: conditional estimates have
/// `log Z ~ N(+sigma^2/2, sigma^2)`, unconditional `N(-sigma^2/2, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalLimit {
    sigma: f64,
}

impl LogNormalLimit {
    pub fn new(sigma: f64) -> Result<Self, Error> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma: must be positive and finite, got {sigma}"
            )));
        }
        Ok(LogNormalLimit { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn conditional_mean(&self) -> f64 {
        self.sigma * self.sigma / 2.0
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    /// Standard error of the difference of two independent estimates.
    pub fn combined_std_error(&self, other: &McEstimate) -> f64 {
        (self.std_error * self.std_error + other.std_error * other.std_error).sqrt()
    }
}

/// Switching probability when every likelihood estimate is equal:
/// `1 - (M - P + 1)^(-P)`.
pub fn switch_probability_equal_weights(m: usize, p: usize) -> f64 {
    assert!(p >= 1 && p <= m, "need 1 <= P <= M");
    1.0 - ((m - p + 1) as f64).powi(-(p as i32))
}

const TRIALS_PER_SHARD: u64 = 1 << 14;

/// Monte Carlo estimate of the switching probability under the log-normal
/// limit.
///
/// Trials are sharded onto labeled streams and reduced in shard order, so
/// the estimate is a pure function of `(limit, m, p, trials, seed)`
/// regardless of thread scheduling.
pub fn switch_probability_lognormal_mc(
    limit: &LogNormalLimit,
    m: usize,
    p: usize,
    trials: u64,
    seed: u64,
) -> McEstimate {
    assert!(p >= 1 && p <= m, "need 1 <= P <= M");
    assert!(trials >= 1, "need at least one trial");
    let shards = trials.div_ceil(TRIALS_PER_SHARD);
    let results: Vec<(f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = RandomStream::derive(
                seed,
                StreamId::new(StreamRole::Trial, shard, (m as u64) << 16 | p as u64),
            );
            let count = TRIALS_PER_SHARD.min(trials - shard * TRIALS_PER_SHARD);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut unconditional = vec![0.0f64; m - p];
            let cond_mean = limit.conditional_mean();
            let sigma = limit.sigma();
            for _ in 0..count {
                for lz in unconditional.iter_mut() {
                    *lz = -cond_mean + sigma * rng.normal();
                }
                let log_total = log_sum_exp(&unconditional);
                let mut log_keep = 0.0;
                for _ in 0..p {
                    let lz = cond_mean + sigma * rng.normal();
                    // log of Z_cj / (Z_cj + S): one factor of the no-switch
                    // product, always in (-inf, 0].
                    log_keep += lz - log_sum_exp(&[lz, log_total]);
                }
                let v = 1.0 - log_keep.exp();
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = results
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    McEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        trials,
    }
}

/// Fraction of iterations in which the conditional index set changed.
pub fn empirical_switch_rate(summary: &ChainSummary) -> f64 {
    summary.switch_rate()
}

/// One row of the switching-probability table emitted for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingCurvePoint {
    pub m: usize,
    pub p: usize,
    pub sigma: f64,
    pub estimate: f64,
    pub std_error: f64,
}

/// Evaluates the full switching curve over `P = 1..M` for one `(M, sigma)`.
/// `P = M` is included with its exact zero.
pub fn switching_curve(
    limit: &LogNormalLimit,
    m: usize,
    trials: u64,
    seed: u64,
) -> Vec<SwitchingCurvePoint> {
    (1..=m)
        .map(|p| {
            if p == m {
                SwitchingCurvePoint {
                    m,
                    p,
                    sigma: limit.sigma(),
                    estimate: 0.0,
                    std_error: 0.0,
                }
            } else {
                let est = switch_probability_lognormal_mc(limit, m, p, trials, seed);
                SwitchingCurvePoint {
                    m,
                    p,
                    sigma: limit.sigma(),
                    estimate: est.estimate,
                    std_error: est.std_error,
                }
            }
        })
        .collect()
}
