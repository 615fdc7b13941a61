use criterion::{criterion_group, criterion_main, Criterion};
use hgs_bench::initial_scene;
use hgs_core::hierarchy::{build_scene, init_residuals, HierarchyConfig};
use hgs_core::losses::loss_knn_with_grad;
use std::hint::black_box;

fn densify(c: &mut Criterion) {
    let cfg = HierarchyConfig::default();
    let residuals = init_residuals(&cfg, 0, 0.02);
    let mut group = c.benchmark_group("build_scene");
    group.sample_size(10);
    group.bench_function("default", |b| b.iter(|| build_scene(black_box(&residuals), &cfg).unwrap()));
    group.finish();
}

fn invariants(c: &mut Criterion) {
    let scene = initial_scene(&HierarchyConfig::default());
    c.bench_function("check_invariants/default", |b| b.iter(|| black_box(&scene).check_invariants(0.0, 0.0)));
}

fn knn(c: &mut Criterion) {
    let positions = initial_scene(&HierarchyConfig::default()).root_anchor_positions();
    c.bench_function("knn_loss/256", |b| b.iter(|| loss_knn_with_grad(black_box(&positions), 4).unwrap()));
}

criterion_group!(benches, densify, invariants, knn);
criterion_main!(benches);
