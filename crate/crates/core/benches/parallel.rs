use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use quadfault::config::RunConfig;
use quadfault::env::VecEnv;
use quadfault::trainer::{env_settings, Trainer};
use quadfault::ExecMode;

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn vec_step(c: &mut Criterion) {
    let run = RunConfig::default();
    let settings = Arc::new(env_settings(&run));
    let mut group = c.benchmark_group("vec_env_step_64");
    for mode in MODES {
        let mut envs = VecEnv::new(Arc::clone(&settings), 64, run.terrain, &run.terrain_params, mode);
        let actions = vec![[0.0f64; 12]; envs.len()];
        group.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| black_box(envs.step(&actions).unwrap()))
        });
    }
    group.finish();
}

fn train_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_iteration_16_envs");
    group.sample_size(10);
    for mode in MODES {
        let mut cfg = RunConfig::default();
        cfg.num_envs = 16;
        cfg.exec = mode;
        let mut trainer = Trainer::new(cfg).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| black_box(trainer.iterate().unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, vec_step, train_iteration);
criterion_main!(benches);
