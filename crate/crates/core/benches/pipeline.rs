//! Data-parallel core against the same code confined to one worker thread.
//! `cargo bench --no-default-features` measures the rayon-free fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metaholo_core::corpus::{scene_image, Scene};
use metaholo_core::losses::LossKind;
use metaholo_core::optimizer::{random_phase, HologramProblem, OptimConfig};
use metaholo_core::perception::GazeContext;
use metaholo_core::propagation::{DEFAULT_DISTANCE, DEFAULT_PITCH};

fn single_thread() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool")
}

fn bench_gradient(c: &mut Criterion) {
    let serial = single_thread();
    let mut group = c.benchmark_group("loss_and_gradient");
    group.sample_size(10);
    for size in [64usize, 128] {
        let target = scene_image(Scene::Shapes, size, size, 3, 0).unwrap().image;
        let ctx = GazeContext::default();
        for kind in [LossKind::Mse, LossKind::Metameric] {
            let cfg = OptimConfig {
                loss_kind: kind,
                ..OptimConfig::default()
            };
            let problem = HologramProblem::new(&target, &ctx, DEFAULT_DISTANCE, &cfg).unwrap();
            let phase = random_phase(3, size, size, DEFAULT_PITCH, 1).unwrap();
            let id = format!("{}/{size}", kind.name());
            group.bench_with_input(BenchmarkId::new("pool", &id), &phase, |b, p| {
                b.iter(|| problem.loss_and_gradient(p).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("one_thread", &id), &phase, |b, p| {
                b.iter(|| serial.install(|| problem.loss_and_gradient(p).unwrap()))
            });
        }
    }
    group.finish();
}

fn bench_propagation(c: &mut Criterion) {
    let serial = single_thread();
    let mut group = c.benchmark_group("intensity");
    for size in [128usize, 256] {
        let target = scene_image(Scene::Clouds, size, size, 3, 0).unwrap().image;
        let problem = HologramProblem::new(&target, &GazeContext::default(), DEFAULT_DISTANCE, &OptimConfig {
            loss_kind: LossKind::Mse,
            ..OptimConfig::default()
        })
        .unwrap();
        let phase = random_phase(3, size, size, DEFAULT_PITCH, 2).unwrap();
        group.bench_with_input(BenchmarkId::new("pool", size), &phase, |b, p| {
            b.iter(|| problem.simulate(p).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("one_thread", size), &phase, |b, p| {
            b.iter(|| serial.install(|| problem.simulate(p).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gradient, bench_propagation);
criterion_main!(benches);
