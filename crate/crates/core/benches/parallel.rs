//! One worker against the full pool on the data-parallel kernels. Build with
//! `--no-default-features` to measure the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hooklens::harness::{plan_corpus, render_frames, SynthConfig};
use hooklens::par;
use hooklens::predictor::gbdt::{fit_gbdt, GbdtParams};
use hooklens::rng::SeededRng;
use hooklens::sampler::{frame_diffs, SsimParams};
use hooklens::topics::{cluster, silhouette};

const WORKERS: [(&str, usize); 2] = [("one-worker", 1), ("all-cores", 0)];

fn bench_frame_diffs(c: &mut Criterion) {
    let synth = SynthConfig {
        n_assets: 1,
        width: 256,
        height: 144,
        ..SynthConfig::default()
    };
    let spec = plan_corpus(&synth, 3.0);
    let frames = render_frames(&spec.assets[0], &synth);
    let mut g = c.benchmark_group("frame_diffs");
    for (name, w) in WORKERS {
        g.bench_function(BenchmarkId::new(name, frames.len()), |b| {
            b.iter(|| par::with_workers(w, || frame_diffs(&frames, &SsimParams::default()).unwrap()))
        });
    }
    g.finish();
}

fn bench_gbdt(c: &mut Criterion) {
    let mut rng = SeededRng::new(1);
    let x: Vec<Vec<f64>> = (0..400).map(|_| (0..40).map(|_| rng.normal()).collect()).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| r[0] + 0.5 * r[3] * r[3] + rng.normal() * 0.1)
        .collect();
    let params = GbdtParams {
        n_trees: 30,
        min_samples_split: 10,
        max_depth: 6,
        ..GbdtParams::default()
    };
    let mut g = c.benchmark_group("gbdt_fit");
    g.sample_size(10);
    for (name, w) in WORKERS {
        g.bench_function(name, |b| {
            b.iter(|| par::with_workers(w, || fit_gbdt(&x, &y, &params).unwrap()))
        });
    }
    g.finish();
}

fn bench_silhouette(c: &mut Criterion) {
    let mut rng = SeededRng::new(2);
    let pts: Vec<Vec<f64>> = (0..1500)
        .map(|i| {
            (0..16)
                .map(|d| rng.normal() + if d == i % 6 { 8.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let cl = cluster(&pts, 6, 0).unwrap();
    let mut g = c.benchmark_group("silhouette");
    g.sample_size(10);
    for (name, w) in WORKERS {
        g.bench_function(name, |b| {
            b.iter(|| par::with_workers(w, || silhouette(&pts, &cl.assignments, 6)))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_frame_diffs, bench_gbdt, bench_silhouette);
criterion_main!(benches);
