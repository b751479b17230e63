//! Posterior-invariance and switching-behavior checks on the enumerable
//! model, at a scale suited to routine test runs. The acceptance suite
//! repeats the invariance checks at the full advertised scale.

mod common;

use common::{tv_distance, PathHistogram};
use ipmcmc::baselines::{
    run_multi_start, BaselineKind, BaselineSink, ChainRecord, MultiStartConfig,
};
use ipmcmc::engine::{init_pool, ipmcmc_step, run_chain, MemorySink, PoolConfig, RecordSink};
use ipmcmc::error::Error;
use ipmcmc::models::hmm::{hmm_exact_posterior, DiscreteHmm, HmmExact};
use ipmcmc::smc::SweepResult;
use ipmcmc::weights::log_sum_exp;

fn fixture() -> (DiscreteHmm, Vec<usize>, HmmExact) {
    let hmm = DiscreteHmm::two_state_example();
    let obs = vec![0usize, 1, 0];
    let exact = hmm_exact_posterior(&hmm, &obs).unwrap();
    (hmm, obs, exact)
}

#[test]
fn interacting_pool_matches_exact_posterior() {
    let (hmm, obs, exact) = fixture();
    let encoded = DiscreteHmm::encode_observations(&obs);
    let cfg = PoolConfig {
        nodes: 4,
        conditional: 2,
        particles: 5,
        iterations: 10_000,
        seed: 20_001,
        worker_count: 1,
    };
    let mut hist = PathHistogram::new(&hmm, exact.path_posterior.len());
    {
        let mut sinks: [&mut dyn RecordSink; 1] = [&mut hist];
        run_chain(&cfg, &hmm, &encoded, None, &mut sinks).unwrap();
    }
    let tv = tv_distance(&hist.distribution(), &exact.path_posterior);
    assert!(tv < 0.05, "TV {tv}");
}

#[test]
fn baseline_samplers_match_exact_posterior() {
    let (hmm, obs, exact) = fixture();
    let encoded = DiscreteHmm::encode_observations(&obs);
    for (kind, seed) in [
        (BaselineKind::Pg, 20_010u64),
        (BaselineKind::Pimh, 20_011),
        (BaselineKind::Apg, 20_012),
    ] {
        let cfg = MultiStartConfig {
            chains: 1,
            particles: 5,
            iterations: 20_000,
            seed,
        };
        let mut hist = PathHistogram::new(&hmm, exact.path_posterior.len());
        run_multi_start(kind, &cfg, &hmm, &encoded, &mut hist).unwrap();
        let tv = tv_distance(&hist.distribution(), &exact.path_posterior);
        assert!(tv < 0.05, "{kind:?}: TV {tv}");
    }
}

#[test]
fn switch_rate_positive_below_degenerate_and_zero_at_it() {
    let (hmm, obs, _) = fixture();
    let encoded = DiscreteHmm::encode_observations(&obs);
    let run = |p: usize, seed: u64| {
        let cfg = PoolConfig {
            nodes: 4,
            conditional: p,
            particles: 5,
            iterations: 400,
            seed,
            worker_count: 1,
        };
        let mut sink = MemorySink::default();
        let summary = {
            let mut sinks: [&mut dyn RecordSink; 1] = [&mut sink];
            run_chain(&cfg, &hmm, &encoded, None, &mut sinks).unwrap()
        };
        summary.switch_rate()
    };
    assert_eq!(run(4, 3), 0.0);
    assert!(run(2, 3) > 0.0);
}

#[test]
fn empirical_switch_rate_matches_product_prediction() {
    // The no-switch probability of one Gibbs loop, given the sweeps, is the
    // product over slots of Z_cj / (Z_cj + sum of unconditional Z), with the
    // eligible sets frozen at the iteration's entry state.
    let (hmm, obs, _) = fixture();
    let encoded = DiscreteHmm::encode_observations(&obs);
    let cfg = PoolConfig {
        nodes: 4,
        conditional: 2,
        particles: 10,
        iterations: 4000,
        seed: 555,
        worker_count: 1,
    };
    let (mut state, _) = init_pool(&cfg, &hmm, &encoded, None).unwrap();
    let mut predicted_no_switch = Vec::new();
    let mut observed_no_switch = Vec::new();
    for _ in 0..cfg.iterations {
        let prev_c = state.c.clone();
        let (next, record) = ipmcmc_step(&state, &cfg, &hmm, &encoded).unwrap();
        let log_unconditional: Vec<f64> = (0..cfg.nodes)
            .filter(|m| !prev_c.contains(m))
            .map(|m| record.log_z[m])
            .collect();
        let log_s = log_sum_exp(&log_unconditional);
        let mut log_keep = 0.0;
        for &cj in &prev_c {
            log_keep += record.log_z[cj] - log_sum_exp(&[record.log_z[cj], log_s]);
        }
        predicted_no_switch.push(log_keep.exp());
        observed_no_switch.push(!record.switched as u8 as f64);
        state = next;
    }
    let mean_pred: f64 =
        predicted_no_switch.iter().sum::<f64>() / predicted_no_switch.len() as f64;
    let freq: f64 = observed_no_switch.iter().sum::<f64>() / observed_no_switch.len() as f64;
    // Conditional on the sweeps the indicators are independent Bernoulli
    // draws with the predicted means.
    let var: f64 = predicted_no_switch
        .iter()
        .map(|p| p * (1.0 - p))
        .sum::<f64>()
        / (predicted_no_switch.len() as f64).powi(2);
    let band = 4.0 * var.sqrt();
    assert!(
        (freq - mean_pred).abs() < band,
        "observed {freq}, predicted {mean_pred}, band {band}"
    );
}

#[test]
fn pimh_accept_statistic_is_time_reversible() {
    // At stationarity the log-likelihood-estimate chain is reversible, so
    // the mean MH ratio statistic computed forward along the chain matches
    // the time-reversed one.
    let (hmm, obs, _) = fixture();
    let encoded = DiscreteHmm::encode_observations(&obs);
    struct LogZTrace(Vec<f64>);
    impl BaselineSink for LogZTrace {
        fn on_step(&mut self, record: &ChainRecord, _sys: &SweepResult) -> Result<(), Error> {
            self.0.push(record.log_z);
            Ok(())
        }
    }
    let cfg = MultiStartConfig {
        chains: 1,
        particles: 5,
        iterations: 8000,
        seed: 4321,
    };
    let mut trace = LogZTrace(Vec::new());
    run_multi_start(BaselineKind::Pimh, &cfg, &hmm, &encoded, &mut trace).unwrap();
    let lz = &trace.0;
    let diffs: Vec<f64> = lz
        .windows(2)
        .map(|w| {
            let fwd = (w[1] - w[0]).min(0.0).exp();
            let bwd = (w[0] - w[1]).min(0.0).exp();
            fwd - bwd
        })
        .collect();
    let (mean, se) = common::mean_and_se(&diffs);
    // The chain is autocorrelated; inflate the independent-sample band.
    assert!(mean.abs() < 6.0 * se * 3.0, "mean {mean}, se {se}");
}
