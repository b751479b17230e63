//! Shared fixtures for the kernel benchmarks.

use ipmcmc::models::lgssm::{lgssm_simulate, make_lgssm, LgssmModel};
use ipmcmc::models::nlssm::{make_nlssm, nlssm_simulate, NlssmModel};
use ipmcmc::rng::{RandomStream, StreamId, StreamRole};

pub fn lgssm_fixture(t_len: usize) -> (LgssmModel, Vec<Vec<f64>>) {
    let (params, model) = make_lgssm(7);
    let mut rng = RandomStream::derive(7, StreamId::new(StreamRole::Dataset, 1, 0));
    let (_, observations) = lgssm_simulate(&params, t_len, &mut rng).unwrap();
    (model, observations)
}

pub fn nlssm_fixture(t_len: usize) -> (NlssmModel, Vec<Vec<f64>>) {
    let (params, model) = make_nlssm();
    let mut rng = RandomStream::derive(7, StreamId::new(StreamRole::Dataset, 2, 0));
    let (_, observations) = nlssm_simulate(&params, t_len, &mut rng).unwrap();
    (model, observations)
}

pub fn stream(n: u64) -> RandomStream {
    RandomStream::derive(99, StreamId::new(StreamRole::Sweep, n, 0))
}
