use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use heatfk::feynman_kac::{fk_estimate, SemimartingaleModel};
use heatfk::{sample_noise_lattice, solve_mild, GramFactor, Kernel};
use heatfk_bench::{gaussian_factor, line_grid, linear_coefficients, time_grid};
use std::sync::Arc;

fn gram_factor(c: &mut Criterion) {
    let kernel = Kernel::gaussian(1.0, 0.5).unwrap();
    let mut group = c.benchmark_group("gram_factor");
    for n in [41, 81, 161] {
        let grid = line_grid(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, g| {
            b.iter(|| GramFactor::build(&kernel, g, 1e-12).unwrap())
        });
    }
    group.finish();
}

fn mild_solver(c: &mut Criterion) {
    let coeffs = linear_coefficients();
    let mut group = c.benchmark_group("solve_mild");
    for n in [81, 161] {
        let lattice = sample_noise_lattice(&gaussian_factor(n), time_grid(250), 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &lattice, |b, l| {
            b.iter(|| solve_mild(&coeffs, l).unwrap())
        });
    }
    group.finish();
}

fn feynman_kac(c: &mut Criterion) {
    let factor = gaussian_factor(81);
    let lattice = Arc::new(sample_noise_lattice(&factor, time_grid(250), 7));
    let model = SemimartingaleModel::quenched(lattice, Kernel::gaussian(1.0, 0.5).unwrap()).unwrap();
    let h = |x: &[f64]| 1.0 + 0.5 * x[0].sin();
    c.bench_function("fk_estimate_1000_paths", |b| b.iter(|| fk_estimate(&h, &model, 0.25, &[0.0], 1000, 3).unwrap()));
}

criterion_group!(benches, gram_factor, mild_solver, feynman_kac);
criterion_main!(benches);
