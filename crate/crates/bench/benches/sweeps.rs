use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kacmix::exact::{enumerate, EnumerateOptions};
use kacmix::rng::stream_rng;
use kacmix::sampler::{mcmc_sweep, sw_sweep, Dynamics, SweepOrder, SwWorkspace};
use kacmix::young::ball_averages;
use kacmix::{Boundary, SpinConfig};
use kacmix_bench::{kac_state, nn_params};
use rand::Rng;

fn kac_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("kac_sweep");
    group.sample_size(20);
    for (side, gamma) in [(32, 0.125), (64, 0.125), (128, 0.0625)] {
        for dynamics in [Dynamics::Glauber, Dynamics::Metropolis] {
            let (mut state, mut rng) = kac_state(2, side, gamma, 1.0, 1);
            let id = BenchmarkId::new(dynamics.name(), format!("{side}x{side}/gamma={gamma}"));
            group.bench_function(id, |b| {
                b.iter(|| mcmc_sweep(&mut state, dynamics, SweepOrder::Raster, &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

fn flip_delta(c: &mut Criterion) {
    let (state, mut rng) = kac_state(2, 64, 0.125, 1.0, 2);
    let n = state.config().lattice().site_count();
    c.bench_function("flip_delta/64x64/gamma=0.125", |b| {
        b.iter(|| state.flip_delta(black_box(rng.gen_range(0..n))))
    });
}

fn swendsen_wang(c: &mut Criterion) {
    let mut group = c.benchmark_group("sw_sweep");
    for side in [32, 64, 128] {
        let params = nn_params(2, side, 0.6, Boundary::Plus);
        let mut config = SpinConfig::all_plus(*params.lattice());
        let mut ws = SwWorkspace::new(&params);
        let mut rng = stream_rng(3, 0);
        group.bench_function(BenchmarkId::from_parameter(side), |b| {
            b.iter(|| sw_sweep(&mut config, &params, &mut ws, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate");
    group.sample_size(10);
    for side in [3, 4] {
        let params = nn_params(2, side, 0.4, Boundary::Periodic);
        group.bench_function(BenchmarkId::from_parameter(side * side), |b| {
            b.iter(|| enumerate(&params, EnumerateOptions::default()).unwrap().log_z())
        });
    }
    group.finish();
}

fn balls(c: &mut Criterion) {
    let (state, _) = kac_state(2, 128, 0.0625, 1.0, 4);
    let mut group = c.benchmark_group("ball_averages/128x128");
    for radius in [4.0, 48.0] {
        group.bench_function(BenchmarkId::from_parameter(radius), |b| {
            b.iter(|| ball_averages(state.config(), black_box(radius)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kac_sweeps, flip_delta, swendsen_wang, exact, balls);
criterion_main!(benches);
