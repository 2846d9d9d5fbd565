use std::hint::black_box;

use chrono::Month;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use resurgence_bench::{july_window, lattice_points};
use resurgence_core::entomology::ParamSpecs;
use resurgence_core::finalsize::solve_attack_probability;
use resurgence_core::oracle::simulate_attack_fraction;
use resurgence_core::surface::{kde_raster, Extent};
use resurgence_core::transmission::{monte_carlo_r0, CapacityModel};

fn final_size(c: &mut Criterion) {
    c.bench_function("solve_attack_probability", |b| {
        b.iter(|| solve_attack_probability(black_box(2.3), black_box(0.01)).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let window = july_window();
    let specs = ParamSpecs::default();
    let mut g = c.benchmark_group("monte_carlo_r0");
    for n in [100usize, 1000] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| monte_carlo_r0("R001", Month::July, &window, &specs, 0.08, n, 1, CapacityModel::Delayed).unwrap())
        });
    }
    g.finish();
}

fn kde(c: &mut Criterion) {
    let extent = Extent { xmin: 0.0, ymin: 0.0, xmax: 40_000.0, ymax: 40_000.0 };
    let mut g = c.benchmark_group("kde_raster_500m");
    for n in [10usize, 100] {
        let pts = lattice_points(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, pts| {
            b.iter(|| kde_raster(pts, &extent, 500.0, 5_000.0).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("r0_2_mu0_0.01_n1e5_runs20", |b| {
        b.iter(|| simulate_attack_fraction(2.0, 0.01, 100_000, 20, black_box(7)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, final_size, monte_carlo, kde, oracle);
criterion_main!(benches);
