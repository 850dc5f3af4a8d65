use coarsekit::coarse::{assemble, lorenz_mesh};
use coarsekit::plim::{solve_invariance, PlimConfig};
use coarsekit::{catalog, integrate, IntegratorConfig};
use coarsekit_bench::linear_plim;
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn rk4_lorenz(c: &mut Criterion) {
    let sys = catalog::lorenz_default();
    let cfg = IntegratorConfig::rk4(1e-3).record_every(100);
    c.bench_function("rk4 lorenz 10k steps", |b| b.iter(|| integrate(&sys, black_box(&[1.0, 1.0, 20.0]), 0.0, 10.0, &cfg).unwrap()));
}

fn rk45_hald(c: &mut Criterion) {
    let sys = catalog::hald();
    let cfg = IntegratorConfig::rk45(1e-10);
    c.bench_function("rk45 hald t=10", |b| b.iter(|| integrate(&sys, black_box(&[1.0, 0.0, 1.0, 0.0]), 0.0, 10.0, &cfg).unwrap()));
}

fn lsq_assembly(c: &mut Criterion) {
    let sys = catalog::lorenz_default();
    let mesh = lorenz_mesh(8).unwrap();
    c.bench_function("assemble lorenz 8^3", |b| b.iter(|| assemble(black_box(&mesh), &sys, 1.0, 0.0).unwrap()));
}

fn plim_relax(c: &mut Criterion) {
    let (problem, fam) = linear_plim(41).unwrap();
    let cfg = PlimConfig { max_iters: 200, tol: 1e-300, ..PlimConfig::default() };
    c.bench_function("plim linear 200 sweeps", |b| b.iter(|| solve_invariance(&problem, black_box(&fam), &cfg).unwrap()));
}

criterion_group!(benches, rk4_lorenz, rk45_hald, lsq_assembly, plim_relax);
criterion_main!(benches);
