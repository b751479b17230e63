//! The classic one-dimensional nonlinear benchmark model.
//!
//! ```text
//! x_1 ~ N(mu, v^2)
//! x_t = x_{t-1}/2 + 25 x_{t-1}/(1 + x_{t-1}^2) + 8 cos(1.2 t) + N(0, omega^2)
//! y_t = x_t^2 / 20 + N(0, sigma^2)
//! ```
//!
//! The squared observation makes the likelihood symmetric in `±x_t`, so the
//! posterior is multimodal and long sequences are hard to mix over. Time `t`
//! in the transition is 1-based to match the usual statement of the model.

use crate::error::Error;
use crate::model::{Model, PathView};
use crate::rng::RandomStream;

/// Scalar parameters; all scale parameters are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlssmParams {
    pub mu: f64,
    pub v: f64,
    pub omega: f64,
    pub sigma: f64,
}

impl NlssmParams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.v <= 0.0 || self.omega <= 0.0 || self.sigma <= 0.0 {
            return Err(Error::Model(
                "nlssm scale parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NlssmModel {
    params: NlssmParams,
}

impl NlssmModel {
    pub fn new(params: NlssmParams) -> Result<Self, Error> {
        params.validate()?;
        Ok(NlssmModel { params })
    }

    pub fn params(&self) -> &NlssmParams {
        &self.params
    }

    /// Mean of `x_t` given `x_{t-1}`; `t` is the 0-based step index.
    #[inline]
    pub fn transition_mean(prev: f64, t: usize) -> f64 {
        let paper_t = (t + 1) as f64;
        prev / 2.0 + 25.0 * prev / (1.0 + prev * prev) + 8.0 * (1.2 * paper_t).cos()
    }

    /// Mean of `y_t` given `x_t`.
    #[inline]
    pub fn observation_mean(x: f64) -> f64 {
        x * x / 20.0
    }
}

#[inline]
fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl Model for NlssmModel {
    fn dim(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = self.params.mu + self.params.v * rng.normal();
    }

    fn log_initial(&self, x: &[f64]) -> f64 {
        normal_logpdf(x[0], self.params.mu, self.params.v)
    }

    fn sample_transition(
        &self,
        t: usize,
        history: &PathView<'_>,
        rng: &mut RandomStream,
        out: &mut [f64],
    ) {
        out[0] = Self::transition_mean(history.last()[0], t) + self.params.omega * rng.normal();
    }

    fn log_transition(&self, t: usize, history: &PathView<'_>, x: &[f64]) -> f64 {
        normal_logpdf(
            x[0],
            Self::transition_mean(history.last()[0], t),
            self.params.omega,
        )
    }

    fn log_observation(&self, _t: usize, _h: &PathView<'_>, x: &[f64], y: &[f64]) -> f64 {
        normal_logpdf(y[0], Self::observation_mean(x[0]), self.params.sigma)
    }
}

/// The benchmark parameterization: `mu = 0`, `v = sqrt(5)`,
/// `omega = sigma = sqrt(10)`.
pub fn make_nlssm() -> (NlssmParams, NlssmModel) {
    let params = NlssmParams {
        mu: 0.0,
        v: 5.0f64.sqrt(),
        omega: 10.0f64.sqrt(),
        sigma: 10.0f64.sqrt(),
    };
    (params, NlssmModel::new(params).expect("benchmark parameters are valid"))
}

/// Simulates latents and observations of length `t_len`.
pub fn nlssm_simulate(
    params: &NlssmParams,
    t_len: usize,
    rng: &mut RandomStream,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), Error> {
    params.validate()?;
    let mut latents = Vec::with_capacity(t_len);
    let mut observations = Vec::with_capacity(t_len);
    let mut x = params.mu + params.v * rng.normal();
    for t in 0..t_len {
        if t > 0 {
            x = NlssmModel::transition_mean(x, t) + params.omega * rng.normal();
        }
        let y = NlssmModel::observation_mean(x) + params.sigma * rng.normal();
        latents.push(vec![x]);
        observations.push(vec![y]);
    }
    Ok((latents, observations))
}
