use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use varcolor::fastconv::{cached_separation, r_field_fast, FitGrid};
use varcolor::solver::r_field_exact;
use varcolor::{enhance_channel, ContrastVariant, EnhanceParams, RMode, Regularizer};
use varcolor_bench::fixture;

fn force_field(c: &mut Criterion) {
    let reg = Regularizer::default();
    let variant = ContrastVariant::id();
    let sep = cached_separation(&variant, &reg, 9, FitGrid::default()).expect("fit");
    let mut group = c.benchmark_group("force_field");
    group.sample_size(10);
    for side in [16usize, 32, 64] {
        let (plane, kernel) = fixture(side);
        group.bench_with_input(BenchmarkId::new("exact", side), &side, |b, _| {
            b.iter(|| r_field_exact(black_box(&plane), &kernel, &variant, &reg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fast", side), &side, |b, _| {
            b.iter(|| r_field_fast(black_box(&plane), &kernel, &sep).unwrap())
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let (plane, kernel) = fixture(32);
    let mut group = c.benchmark_group("enhance_channel_32");
    group.sample_size(10);
    for mode in [RMode::Exact, RMode::Fast] {
        let p = EnhanceParams {
            r_mode: mode,
            track_energy: false,
            ..EnhanceParams::default()
        };
        group.bench_function(format!("{mode:?}").to_lowercase(), |b| {
            b.iter(|| enhance_channel(black_box(&plane), &kernel, &p).unwrap())
        });
    }
    group.finish();
}

fn polynomial_fit(c: &mut Criterion) {
    let reg = Regularizer::default();
    c.bench_function("fit_separation_n9", |b| {
        b.iter(|| {
            varcolor::fastconv::fit_separation(&ContrastVariant::id(), &reg, 9, FitGrid::default())
                .unwrap()
        })
    });
}

criterion_group!(benches, force_field, solve, polynomial_fit);
criterion_main!(benches);
