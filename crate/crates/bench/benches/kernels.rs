use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ipmcmc::engine::{init_pool, ipmcmc_step, PoolConfig};
use ipmcmc::estimators::{self_normalized_estimate, TestFunction};
use ipmcmc::smc::{csmc_sweep, multinomial_resample, smc_sweep};
use ipmcmc::weights::{log_mean_exp, normalize_log_weights};
use ipmcmc_bench::{lgssm_fixture, nlssm_fixture, stream};

fn bench_weights(c: &mut Criterion) {
    let mut rng = stream(0);
    let lw: Vec<f64> = (0..1000).map(|_| -5.0 + 10.0 * rng.uniform()).collect();
    c.bench_function("normalize_log_weights/1000", |b| {
        b.iter(|| normalize_log_weights(black_box(&lw)).unwrap())
    });
    c.bench_function("log_mean_exp/1000", |b| {
        b.iter(|| log_mean_exp(black_box(&lw)).unwrap())
    });
}

fn bench_resampling(c: &mut Criterion) {
    let mut rng = stream(1);
    let raw: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    c.bench_function("multinomial_resample/1000", |b| {
        let mut draw_rng = stream(2);
        b.iter(|| multinomial_resample(black_box(&probs), 1000, &mut draw_rng).unwrap())
    });
}

fn bench_sweeps(c: &mut Criterion) {
    let (lgssm, lgssm_obs) = lgssm_fixture(50);
    c.bench_function("smc_sweep/lgssm_T50_N100", |b| {
        let mut rng = stream(3);
        b.iter(|| smc_sweep(black_box(&lgssm), &lgssm_obs, 100, &mut rng).unwrap())
    });

    let (nlssm, nlssm_obs) = nlssm_fixture(200);
    c.bench_function("smc_sweep/nlssm_T200_N100", |b| {
        let mut rng = stream(4);
        b.iter(|| smc_sweep(black_box(&nlssm), &nlssm_obs, 100, &mut rng).unwrap())
    });

    let mut rng = stream(5);
    let origin = smc_sweep(&lgssm, &lgssm_obs, 100, &mut rng).unwrap();
    let (retained, _) = origin.extract_trajectory(0).unwrap();
    c.bench_function("csmc_sweep/lgssm_T50_N100", |b| {
        let mut rng = stream(6);
        b.iter(|| csmc_sweep(black_box(&lgssm), &lgssm_obs, 100, &retained, &mut rng).unwrap())
    });
}

fn bench_pool_step(c: &mut Criterion) {
    let (model, observations) = lgssm_fixture(50);
    let config = PoolConfig {
        nodes: 8,
        conditional: 4,
        particles: 100,
        iterations: 1,
        seed: 11,
        worker_count: 1,
    };
    let (state, _) = init_pool(&config, &model, &observations, None).unwrap();
    c.bench_function("ipmcmc_step/lgssm_M8_P4_N100", |b| {
        b.iter(|| ipmcmc_step(black_box(&state), &config, &model, &observations).unwrap())
    });
}

fn bench_estimators(c: &mut Criterion) {
    let (model, observations) = lgssm_fixture(50);
    let mut rng = stream(7);
    let sweep = smc_sweep(&model, &observations, 100, &mut rng).unwrap();
    let f = TestFunction::identity();
    c.bench_function("self_normalized_estimate/lgssm_T50_N100", |b| {
        b.iter(|| self_normalized_estimate(black_box(&sweep), &f).unwrap())
    });
}

criterion_group!(
    benches,
    bench_weights,
    bench_resampling,
    bench_sweeps,
    bench_pool_step,
    bench_estimators
);
criterion_main!(benches);
