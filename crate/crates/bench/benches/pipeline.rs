use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pmcgraph::geometry::GeometryChart;
use pmcgraph::mesh::{DiscreteDomain, Polyline};
use pmcgraph::operator::{jacobian, residual, OperatorContext};
use pmcgraph::solver::{continuation_solve, NewtonParams, SigmaSchedule};
use pmcgraph_bench::cap_fixture;

fn bench_domain_build(c: &mut Criterion) {
    let chart = GeometryChart::euclidean();
    c.bench_function("domain_build_fmm_disk_129", |b| {
        b.iter(|| {
            DiscreteDomain::build(Polyline::circle([0.0, 0.0], 0.5, 2048), 129, &chart).unwrap()
        })
    });
}

fn bench_residual(c: &mut Criterion) {
    let f = cap_fixture(129);
    let ctx = OperatorContext::new(&f.chart, &f.dom, &f.curvature, &f.phi, 1.0).unwrap();
    c.bench_function("residual_assembly_disk_129", |b| {
        b.iter(|| residual(&ctx, &f.u).unwrap())
    });
}

fn bench_jacobian_factor(c: &mut Criterion) {
    let f = cap_fixture(65);
    let ctx = OperatorContext::new(&f.chart, &f.dom, &f.curvature, &f.phi, 1.0).unwrap();
    c.bench_function("jacobian_assemble_factor_disk_65", |b| {
        b.iter_batched(
            || jacobian(&ctx, &f.u).unwrap(),
            |jac| jac.factor().unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn bench_cap_solve(c: &mut Criterion) {
    let f = cap_fixture(65);
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("cap_continuation_disk_65", |b| {
        b.iter(|| {
            continuation_solve(
                &f.chart,
                &f.dom,
                &f.curvature,
                &f.phi,
                &SigmaSchedule::default(),
                &NewtonParams::default(),
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_domain_build,
    bench_residual,
    bench_jacobian_factor,
    bench_cap_solve
);
criterion_main!(benches);
