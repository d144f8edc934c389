use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fdconv::autodiff::Tape;
use fdconv::fbm::{fbm_forward, fbm_forward_postmod, BandMaskSet, DEFAULT_THRESHOLDS};
use fdconv::fdw::{FdwBasis, SpectralBank};
use fdconv::layer::{fdconv_forward, FdConvConfig, LayerGraph, LayerState};
use fdconv::numerics::{conv2d_direct, conv2d_fft, dft2};
use fdconv::{PadMode, Tensor};

fn pattern(shape: &[usize], salt: usize) -> Tensor {
    Tensor::from_fn(shape, |i| ((i * 7919 + salt * 104_729) % 211) as f64 / 211.0 - 0.5)
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    for s in [16, 32, 64] {
        let x = pattern(&[4, s, s], 1);
        let w = pattern(&[3, 3, 4, 8], 2);
        group.bench_with_input(BenchmarkId::new("direct", s), &s, |b, _| {
            b.iter(|| conv2d_direct(black_box(&x), black_box(&w), PadMode::Circular).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fourier", s), &s, |b, _| {
            b.iter(|| conv2d_fft(black_box(&x), black_box(&w)).unwrap())
        });
    }
    group.finish();
}

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("dft2");
    for s in [16, 48, 64] {
        let x = pattern(&[s, s], 3);
        group.bench_with_input(BenchmarkId::from_parameter(s), &s, |b, _| {
            b.iter(|| dft2(black_box(&x)).unwrap())
        });
    }
    group.finish();
}

fn band_modulation(c: &mut Criterion) {
    let s = 32;
    let masks = BandMaskSet::build(s, s, &DEFAULT_THRESHOLDS).unwrap();
    let x = pattern(&[4, s, s], 4);
    let w = pattern(&[3, 3, 4, 8], 5);
    let a = Tensor::from_fn(&[masks.bands(), s, s], |i| 0.25 + (i % 17) as f64 / 34.0);
    c.bench_function("fbm_forward 4x32x32", |b| {
        b.iter(|| fbm_forward(black_box(&x), &w, &a, &masks).unwrap())
    });
    c.bench_function("fbm_forward_postmod 4x32x32", |b| {
        b.iter(|| fbm_forward_postmod(black_box(&x), &w, &a, &masks).unwrap())
    });
}

fn fdw_materialize(c: &mut Criterion) {
    let mut group = c.benchmark_group("fdw materialize 3x16x16");
    for n in [4, 16, 64] {
        let basis = FdwBasis::new(fdconv::WeightShape::new(3, 16, 16), n).unwrap();
        let bank = SpectralBank::new(basis.table(), pattern(&[basis.table().param_count()], 6)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| basis.materialize(black_box(&bank)).unwrap())
        });
    }
    group.finish();
}

fn layer(c: &mut Criterion) {
    let config = FdConvConfig {
        k: 3,
        c_in: 4,
        c_out: 8,
        n: 8,
        ..FdConvConfig::default()
    };
    let state = LayerState::init(&config).unwrap();
    let x = pattern(&[4, 32, 32], 7);
    c.bench_function("fdconv forward 4x32x32", |b| {
        b.iter(|| fdconv_forward(black_box(&x), &state).unwrap())
    });
    c.bench_function("fdconv forward+backward 4x32x32", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let mut graph = LayerGraph::new(&mut tape, &state).unwrap();
            let xv = tape.constant(x.clone());
            let y = graph.forward(&mut tape, xv).unwrap();
            let loss = tape.sum(y).unwrap();
            tape.grad(loss).unwrap()
        })
    });
}

criterion_group!(
    benches,
    convolution,
    transforms,
    band_modulation,
    fdw_materialize,
    layer
);
criterion_main!(benches);
