#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use iclabel_core::autocorr::acf_feature;
use iclabel_core::dsp::Signal;
use iclabel_core::spectral::psd_feature;
use iclabel_core::topomap::{biharmonic_interpolate, project_electrodes};
use iclabel_core::{extract_features, CompatFlags};
use rand::Rng;
use support::synth;

fn stages(c: &mut Criterion) {
    let mut rng = synth::rng(1);
    let locs = synth::montage(&mut rng, 32, 0.6);
    let plane = project_electrodes(&locs).unwrap();
    let values: Vec<f64> = (0..plane.xy.len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    c.bench_function("topo 32 electrodes", |b| {
        b.iter(|| biharmonic_interpolate(black_box(&plane), black_box(&values)))
    });

    // 80 epochs of 3 s at 128 Hz.
    let (srate, pnts, trials) = (128, 384, 80);
    let x: Vec<f64> = (0..pnts * trials)
        .map(|_| synth::normal(&mut rng))
        .collect();
    let sig = Signal::new(&x, pnts, trials);
    c.bench_function("psd 80 x 3 s", |b| {
        b.iter(|| psd_feature(black_box(sig), srate, true))
    });
    c.bench_function("acf epoched 80 x 3 s", |b| {
        b.iter(|| acf_feature(black_box(sig), srate, true))
    });
    let cont = Signal::continuous(&x);
    c.bench_function("acf continuous 240 s", |b| {
        b.iter(|| acf_feature(black_box(cont), srate, true))
    });
}

fn dataset(c: &mut Criterion) {
    let ds = synth::dataset(2, 32, 128, 384, 80);
    let mut group = c.benchmark_group("extract_features");
    group.sample_size(10);
    group.bench_function("32 components", |b| {
        b.iter(|| extract_features(black_box(&ds), CompatFlags::default()))
    });
    group.finish();
}

criterion_group!(benches, stages, dataset);
criterion_main!(benches);
