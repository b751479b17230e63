//! Shared test support: independent oracles and small statistics helpers.
//!
//! The grid smoother here is a brute-force quadrature route to the exact
//! posterior of a scalar linear-Gaussian model. It shares no code with the
//! Kalman/RTS implementation it is used to check: densities are evaluated
//! on a uniform grid and the forward-backward recursions are integrated
//! with trapezoid weights.

#![allow(dead_code)]

use ipmcmc::baselines::{BaselineSink, ChainRecord};
use ipmcmc::engine::{PoolState, RecordSink, StepRecord};
use ipmcmc::error::Error;
use ipmcmc::model::Trajectory;
use ipmcmc::models::hmm::DiscreteHmm;
use ipmcmc::models::lgssm::LgssmParams;
use ipmcmc::smc::SweepResult;

/// Histogram over latent paths accumulated from retained trajectories;
/// plugs into both the pool engine and the baseline runners.
pub struct PathHistogram {
    hmm: DiscreteHmm,
    counts: Vec<f64>,
    total: f64,
}

impl PathHistogram {
    pub fn new(hmm: &DiscreteHmm, paths: usize) -> Self {
        PathHistogram {
            hmm: hmm.clone(),
            counts: vec![0.0; paths],
            total: 0.0,
        }
    }

    pub fn add(&mut self, traj: &Trajectory) {
        let idx = self.hmm.path_index(traj.states().map(|s| s[0]));
        self.counts[idx] += 1.0;
        self.total += 1.0;
    }

    pub fn distribution(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c / self.total).collect()
    }
}

impl RecordSink for PathHistogram {
    fn on_record(&mut self, state: &PoolState, record: &StepRecord) -> Result<(), Error> {
        if record.is_init {
            return Ok(());
        }
        for traj in &state.retained {
            self.add(traj);
        }
        Ok(())
    }
}

impl BaselineSink for PathHistogram {
    fn on_step(&mut self, record: &ChainRecord, _sys: &SweepResult) -> Result<(), Error> {
        self.add(&record.retained);
        Ok(())
    }
}

pub struct GridPosterior {
    pub log_evidence: f64,
    pub filter_means: Vec<f64>,
    pub smoothed_means: Vec<f64>,
    pub smoothed_vars: Vec<f64>,
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Exact smoothing for a scalar linear-Gaussian model by quadrature on a
/// uniform grid over `[lo, hi]` with `n` points.
pub fn grid_smoother(
    params: &LgssmParams,
    observations: &[Vec<f64>],
    lo: f64,
    hi: f64,
    n: usize,
) -> GridPosterior {
    assert_eq!(params.dim_latent(), 1, "grid oracle is scalar only");
    assert_eq!(params.dim_obs(), 1, "grid oracle is scalar only");
    let mu = params.mu[0];
    let v = params.v[(0, 0)];
    let a = params.alpha[(0, 0)];
    let omega = params.omega[(0, 0)];
    let b = params.beta[(0, 0)];
    let sigma = params.sigma[(0, 0)];
    let t_len = observations.len();

    let h = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * h).collect();
    // Trapezoid quadrature weights.
    let quad: Vec<f64> = (0..n)
        .map(|k| if k == 0 || k == n - 1 { h / 2.0 } else { h })
        .collect();

    // Transition kernel K[j * n + k] = p(x' = xs[k] | x = xs[j]).
    let mut kernel = vec![0.0f64; n * n];
    for j in 0..n {
        let mean = a * xs[j];
        for k in 0..n {
            kernel[j * n + k] = normal_pdf(xs[k], mean, omega);
        }
    }
    let likes: Vec<Vec<f64>> = observations
        .iter()
        .map(|y| xs.iter().map(|&x| normal_pdf(y[0], b * x, sigma)).collect())
        .collect();

    // Scaled forward pass; each step's scale is its evidence increment.
    let mut alpha_t = vec![vec![0.0f64; n]; t_len];
    let mut log_evidence = 0.0;
    let mut filter_means = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut unnorm = vec![0.0f64; n];
        if t == 0 {
            for k in 0..n {
                unnorm[k] = normal_pdf(xs[k], mu, v) * likes[0][k];
            }
        } else {
            for k in 0..n {
                let mut pred = 0.0;
                for j in 0..n {
                    pred += alpha_t[t - 1][j] * quad[j] * kernel[j * n + k];
                }
                unnorm[k] = pred * likes[t][k];
            }
        }
        let scale: f64 = unnorm.iter().zip(&quad).map(|(u, w)| u * w).sum();
        log_evidence += scale.ln();
        for k in 0..n {
            alpha_t[t][k] = unnorm[k] / scale;
        }
        let mean: f64 = xs
            .iter()
            .zip(&alpha_t[t])
            .zip(&quad)
            .map(|((x, d), w)| x * d * w)
            .sum();
        filter_means.push(mean);
    }

    // Scaled backward pass.
    let mut beta_t = vec![vec![1.0f64; n]; t_len];
    for t in (0..t_len - 1).rev() {
        let mut row = vec![0.0f64; n];
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += kernel[j * n + k] * likes[t + 1][k] * beta_t[t + 1][k] * quad[k];
            }
            row[j] = acc;
        }
        let norm: f64 = row.iter().zip(&quad).map(|(r, w)| r * w).sum();
        for j in 0..n {
            beta_t[t][j] = row[j] / norm;
        }
    }

    let mut smoothed_means = Vec::with_capacity(t_len);
    let mut smoothed_vars = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let gamma: Vec<f64> = alpha_t[t]
            .iter()
            .zip(&beta_t[t])
            .map(|(a, b)| a * b)
            .collect();
        let norm: f64 = gamma.iter().zip(&quad).map(|(g, w)| g * w).sum();
        let mean: f64 = xs
            .iter()
            .zip(&gamma)
            .zip(&quad)
            .map(|((x, g), w)| x * g * w)
            .sum::<f64>()
            / norm;
        let var: f64 = xs
            .iter()
            .zip(&gamma)
            .zip(&quad)
            .map(|((x, g), w)| (x - mean) * (x - mean) * g * w)
            .sum::<f64>()
            / norm;
        smoothed_means.push(mean);
        smoothed_vars.push(var);
    }

    GridPosterior {
        log_evidence,
        filter_means,
        smoothed_means,
        smoothed_vars,
    }
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}

/// Mean and standard error of a sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median of a sample (by value copy).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Two-sample Kolmogorov-Smirnov test: returns the asymptotic p-value for
/// the hypothesis that both samples share a distribution.
pub fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n1, n2) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < n1 && j < n2 {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let diff = (i as f64 / n1 as f64 - j as f64 / n2 as f64).abs();
        d = d.max(diff);
    }
    let n_e = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let lambda = (n_e.sqrt() + 0.12 + 0.11 / n_e.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}
