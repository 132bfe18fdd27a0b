use criterion::{criterion_group, criterion_main, Criterion};
use lbe_bench::small_ball_context;
use lbe_core::{ConvexDomain, Field, KernelParams, Vec3};
use std::hint::black_box;

fn geometry(c: &mut Criterion) {
    let ellipsoid = ConvexDomain::ellipsoid([2.0, 1.0, 1.0], [0.0; 3]).unwrap();
    let x = Vec3::new(0.3, -0.2, 0.1);
    let v = Vec3::new(0.4, 1.1, -0.7);
    c.bench_function("backward_exit/ellipsoid", |b| {
        b.iter(|| ellipsoid.backward_exit(black_box(&x), black_box(&v)).unwrap())
    });
}

fn kernel(c: &mut Criterion) {
    let p = KernelParams::default();
    let v = Vec3::new(0.3, -1.2, 0.5);
    let w = Vec3::new(-0.8, 0.1, 2.0);
    c.bench_function("kernel/k_eval", |b| {
        b.iter(|| p.k_eval(black_box(&v), black_box(&w)).unwrap())
    });
    c.bench_function("kernel/grad_v_k", |b| {
        b.iter(|| p.grad_v_k(black_box(&v), black_box(&w)).unwrap())
    });
}

fn discrete_sk(c: &mut Criterion) {
    let ctx = small_ball_context();
    let f = Field::from_fn(|x, v| (1.0 + x.x) * (-v.norm_squared()).exp());
    let samples = ctx.lattice_samples(&f).unwrap();
    let mut group = c.benchmark_group("discrete_sk");
    group.sample_size(10);
    group.bench_function("collide", |b| {
        b.iter(|| ctx.discrete_sk_samples(black_box(samples.clone())))
    });
    let t = ctx.discrete_sk_samples(samples.clone());
    let x = Vec3::new(0.02, -0.03, 0.01);
    let v = ctx.grid().velocity_nodes[100];
    group.bench_function("eval_node_velocity", |b| {
        b.iter(|| t.eval(black_box(&x), black_box(&v)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, geometry, kernel, discrete_sk);
criterion_main!(benches);
