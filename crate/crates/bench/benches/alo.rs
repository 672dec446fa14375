use std::hint::black_box;

use alo_bench::{gaussian_ridge, logistic_lasso, poisson_elastic_net};
use alo_core::linalg::{direct_leverage, woodbury_leverage};
use alo_core::{alo_auto, fit, fit_path, lo_exact_from, ErrorMetric, FitConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array1;

fn leverage_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("leverage");
    for &(n, p) in &[(100, 400), (400, 100), (200, 200)] {
        let fx = gaussian_ridge(n, p, 1).unwrap();
        let x = fx.ds.x();
        let curv = Array1::from_elem(p, 2.0);
        let ell2 = Array1::ones(n);
        group.bench_with_input(BenchmarkId::new("direct", format!("{n}x{p}")), &(), |b, _| {
            b.iter(|| direct_leverage(black_box(x.view()), curv.view(), ell2.view()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("woodbury", format!("{n}x{p}")), &(), |b, _| {
            b.iter(|| woodbury_leverage(black_box(x.view()), curv.view(), ell2.view()).unwrap())
        });
    }
    group.finish();
}

fn fit_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_path");
    group.sample_size(10);
    let cfg = FitConfig::default();
    for n in [100, 200] {
        let fx = logistic_lasso(n, 2).unwrap();
        group.bench_function(BenchmarkId::new("logistic_lasso", n), |b| {
            b.iter(|| fit_path(&fx.ds, fx.family, fx.penalty, &fx.lambdas, &cfg).unwrap())
        });
    }
    let fx = poisson_elastic_net(100, 200, 3).unwrap();
    group.bench_function("poisson_elastic_net/100x200", |b| {
        b.iter(|| fit_path(&fx.ds, fx.family, fx.penalty, &fx.lambdas, &cfg).unwrap())
    });
    group.finish();
}

fn alo_vs_lo(c: &mut Criterion) {
    let mut group = c.benchmark_group("risk_estimate");
    group.sample_size(10);
    let cfg = FitConfig::default();
    let fx = logistic_lasso(150, 4).unwrap();
    let lambda = fx.lambdas[fx.lambdas.len() / 2];
    let f = fit(&fx.ds, fx.family, fx.penalty, lambda, &cfg, None).unwrap();
    let metric = ErrorMetric::Misclassification01;
    group.bench_function("alo", |b| {
        b.iter(|| alo_auto(&fx.ds, &fx.family, &fx.penalty, black_box(&f), lambda, metric).unwrap())
    });
    group.bench_function("leave_one_out", |b| {
        b.iter(|| lo_exact_from(&fx.ds, fx.family, fx.penalty, lambda, &cfg, metric, black_box(&f.beta_hat)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, leverage_paths, fit_paths, alo_vs_lo);
criterion_main!(benches);
