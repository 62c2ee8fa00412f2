use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use uavchase_core::channel::{ChannelParams, FadingProcess};
use uavchase_core::eval::run_episodes;
use uavchase_core::net::{NetShape, Params};
use uavchase_core::par::{map_range_with, ExecMode};
use uavchase_core::policy::NetworkPolicy;
use uavchase_core::seed;
use uavchase_core::world::WorldParams;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn eval_episodes(c: &mut Criterion) {
    let shape = NetShape {
        lstm_layers: 1,
        hidden: 32,
        dense_layers: 1,
        dense_width: 32,
        ..NetShape::default()
    };
    let nets: [Params<f32>; 4] = std::array::from_fn(|n| Params::init(shape, n as u64).unwrap());
    let policy = NetworkPolicy::new(Arc::new(nets), true);
    let channel = ChannelParams::default();
    let world = WorldParams {
        obs_len: 20,
        initial_radius_m: 20.0,
        max_steps: 100,
        ..WorldParams::default()
    };
    let mut group = c.benchmark_group("eval_episodes");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 32), &mode, |b, &mode| {
            b.iter(|| black_box(run_episodes(&policy, &channel, &world, 32, 7, mode).unwrap()))
        });
    }
    group.finish();
}

fn channel_power(c: &mut Criterion) {
    let params = ChannelParams::default();
    let mut group = c.benchmark_group("channel_power");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 64), &mode, |b, &mode| {
            b.iter(|| {
                let parts = map_range_with(mode, 64, |r| {
                    let p = FadingProcess::new(&params, seed::substream(3, "bench", r as u64)).unwrap();
                    p.gains_series(0.0, 0.1, 2_000).iter().map(|g| g[0].norm_sqr()).sum::<f64>()
                });
                black_box(parts.iter().sum::<f64>())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, eval_episodes, channel_power);
criterion_main!(benches);
