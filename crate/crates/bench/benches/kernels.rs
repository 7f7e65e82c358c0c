use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hyperspread::scenario::{generate_scenario, GenOptions};
use hyperspread::spectral;
use hyperspread::stochastic::{self, MicroState};
use hyperspread::system::{self, Dynamics, SpreadingModel};
use hyperspread::{IntegratorConfig, SingleVirusModel};

fn model(n: usize) -> SingleVirusModel {
    let sc = generate_scenario(&GenOptions { n, m: 2, triangles: 2 * n, ..Default::default() }, 7).unwrap();
    sc.model(0).unwrap().as_polynomial().unwrap().clone()
}

fn kernels(c: &mut Criterion) {
    for n in [5, 50, 200] {
        let m = model(n);
        let z: Vec<f64> = m.upper_bounds().iter().map(|u| 0.3 * u).collect();
        let mut out = vec![0.0; z.len()];
        c.bench_with_input(BenchmarkId::new("drift", n), &z, |b, z| b.iter(|| m.drift_into(black_box(z), &mut out)));
        c.bench_with_input(BenchmarkId::new("jacobian", n), &z, |b, z| b.iter(|| m.jacobian(black_box(z))));
        let k = system::scale_by_healing(&m, &m.linearization());
        c.bench_with_input(BenchmarkId::new("spectral_radius", n), &k, |b, k| {
            b.iter(|| spectral::spectral_radius(black_box(k)).unwrap())
        });
    }
}

fn solvers(c: &mut Criterion) {
    let m = model(20);
    let z0: Vec<f64> = m.upper_bounds().iter().map(|u| 0.5 * u).collect();
    let cfg = IntegratorConfig::default().with_t_end(50.0);
    c.bench_function("integrate/n=20", |b| b.iter(|| system::simulate(&m, black_box(&z0), &cfg).unwrap()));
    c.bench_function("find_equilibria/n=20", |b| b.iter(|| system::find_equilibria(&m, 8, 1).unwrap()));

    let init = MicroState::new(vec![true; m.n()], vec![0.0; m.m()]);
    let grid = stochastic::time_grid(10.0, 0.1);
    c.bench_function("micro_run/n=20", |b| {
        b.iter(|| stochastic::simulate_exact_seeded(&m, &init, 10.0, &grid, 3).unwrap())
    });
}

criterion_group!(benches, kernels, solvers);
criterion_main!(benches);
