use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use leadlag_bench::{noisy_curve, panel, spec};
use leadlag_core::pipeline::dyadic_scales;
use leadlag_core::{eigencurves, fit_eigencurve, simulate_panel, MatrixKind};

fn simulate(c: &mut Criterion) {
    let spec = spec(100, 4, 0.2, 3);
    c.bench_function("simulate_100x4_16384", |b| {
        b.iter(|| simulate_panel(black_box(&spec), 16384, 32).unwrap())
    });
}

fn curves(c: &mut Criterion) {
    let panel = panel(100, 4, 16384, 4);
    let taus = dyadic_scales(128);
    c.bench_function("eigencurves_100_dyadic", |b| {
        b.iter(|| eigencurves(black_box(&panel), &taus, MatrixKind::Correlation, 4).unwrap())
    });
}

fn fit(c: &mut Criterion) {
    let curve = noisy_curve(533, 0.17, 0.16, 5);
    c.bench_function("fit_eigencurve", |b| {
        b.iter(|| fit_eigencurve(black_box(&curve), 533, 1.0).unwrap())
    });
}

criterion_group!(benches, simulate, curves, fit);
criterion_main!(benches);
