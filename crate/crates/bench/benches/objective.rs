use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dyniv::moment::{objective_with, ObjectiveScratch};
use dyniv::{ModelFamily, Structural};
use dyniv_bench::fixture;
use std::hint::black_box;

fn objective(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective");
    for family in [ModelFamily::Weibull, ModelFamily::LogNormal] {
        for n in [1500, 3000, 6000] {
            let (design, ws, grid) = fixture(family, n);
            let model = Structural::new(family, design.theta_true).unwrap();
            let mut scratch = ObjectiveScratch::default();
            group.bench_with_input(BenchmarkId::new(family.to_string(), n), &n, |b, _| {
                b.iter(|| objective_with(black_box(&ws), &model, &grid, &mut scratch))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, objective);
criterion_main!(benches);
