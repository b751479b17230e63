//! Benchmark state-space models and their exact-inference oracles.
//!
//! - [`lgssm`]: linear Gaussian state-space models with a Kalman filter and
//!   Rauch-Tung-Striebel smoother for ground truth.
//! - [`nlssm`]: the classic one-dimensional nonlinear benchmark with
//!   multimodal posteriors.
//! - [`hmm`]: a tiny discrete hidden Markov model whose posterior can be
//!   enumerated exactly, used to verify sampler correctness.
//! - [`dataset`]: a self-describing columnar text format for synthetic
//!   datasets, storing the generating parameters and seed.

pub mod dataset;
pub mod hmm;
pub mod lgssm;
pub mod nlssm;

pub use hmm::{forward_backward, hmm_exact_posterior, DiscreteHmm, HmmExact};
pub use lgssm::{
    kalman_filter_evidence, lgssm_simulate, make_lgssm, make_lgssm_1d, rts_smoother, KalmanResult,
    LgssmModel, LgssmParams, SmootherResult,
};
pub use nlssm::{make_nlssm, nlssm_simulate, NlssmModel, NlssmParams};
