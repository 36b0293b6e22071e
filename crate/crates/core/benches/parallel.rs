use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use simrobust::data::{corrupt, sample_clean_with, AdversaryKind, AdversaryModel, GroundTruth, NoiseModel};
use simrobust::gaussian::QuadratureRule;
use simrobust::link::{builtin, LinkName};
use simrobust::recover::{gradient_points_with, response_weighted, RecoveryConfig};
use simrobust::robust::{robust_mean, robust_top_eigenvector, FilterConfig};
use simrobust::Exec;

const N: usize = 100_000;
const D: usize = 10;
const EPS: f64 = 0.05;

fn policies() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn truth() -> GroundTruth {
    GroundTruth::random(D, LinkName::Gelu, NoiseModel::student_t(6.0, 0.5).unwrap(), 1)
}

fn sampling(c: &mut Criterion) {
    let t = truth();
    let mut g = c.benchmark_group("sample_clean");
    g.sample_size(10);
    for (name, exec) in policies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_clean_with(N, D, &t, 3, exec).unwrap())
        });
    }
    g.finish();
}

fn filters(c: &mut Criterion) {
    let t = truth();
    let ds = sample_clean_with(N, D, &t, 3, Exec::Parallel).unwrap();
    let ds = corrupt(ds, EPS, &AdversaryModel::new(AdversaryKind::PointMass, 100.0, 7), 3).unwrap();
    let link = builtin(LinkName::Gelu);
    let beta: Vec<f64> = t.beta_star.iter().map(|v| v * 0.9).collect();
    let grads = gradient_points_with(ds.view(), &beta, &link, Exec::Parallel);
    let weighted = response_weighted(ds.view(), Exec::Parallel);
    let init = RecoveryConfig::new(&link, &t.noise, EPS, &QuadratureRule::default())
        .unwrap()
        .init_filter();

    let mut g = c.benchmark_group("gradient_points");
    g.sample_size(10);
    for (name, exec) in policies() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| gradient_points_with(ds.view(), &beta, &link, exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("robust_mean");
    g.sample_size(10);
    for (name, exec) in policies() {
        let cfg = FilterConfig {
            exec,
            ..FilterConfig::with_eps(EPS)
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| robust_mean(&grads, cfg, 2.0).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("robust_top_eigenvector");
    g.sample_size(10);
    for (name, exec) in policies() {
        let cfg = FilterConfig { exec, ..init };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| robust_top_eigenvector(&weighted, cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sampling, filters);
criterion_main!(benches);
