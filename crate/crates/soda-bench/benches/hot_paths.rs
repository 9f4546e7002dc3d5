//! Criterion benches for the paths that dominate real workloads:
//! rendering + packing, the multi-start parametric fit, schedule
//! sampling, and tied-rank correlation.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use soda_bench::{bench_mixture, reference_runs, synthetic_documents, tied_series};
use soda_core::interleave::{render, rendered_len, Packer, RenderFormat};
use soda_core::mixture::sample_schedule;
use soda_core::scaling::{fit_parametric, isoflop_pipeline};
use soda_core::spearman;
use soda_core::vocab::VocabLayout;

fn bench_render_and_pack(c: &mut Criterion) {
    let layout = VocabLayout::default();
    let docs = synthetic_documents(500, 3);
    let total_tokens: usize = docs.iter().map(|d| rendered_len(d, &layout)).sum();

    let mut group = c.benchmark_group("pack");
    group.throughput(Throughput::Elements(total_tokens as u64));
    group.bench_function("render_and_pack_500_docs", |b| {
        b.iter(|| {
            let mut packer = Packer::new(4_096, &layout).unwrap();
            let mut emitted = 0usize;
            for (i, doc) in docs.iter().enumerate() {
                let format = if i % 2 == 0 {
                    RenderFormat::TextFirst
                } else {
                    RenderFormat::AudioFirst
                };
                let rendered = render(doc, format, &layout);
                emitted += packer.append(&doc.doc_id, format, &rendered).unwrap().len();
            }
            let (_, summary) = packer.finish();
            (emitted, summary.tokens_packed)
        })
    });
    group.finish();
}

fn bench_scaling_fits(c: &mut Criterion) {
    let runs = reference_runs();
    let mut group = c.benchmark_group("scaling");
    // The multi-start fit is the heavy path; fewer samples keep the
    // bench suite short.
    group.sample_size(10);
    group.bench_function("parametric_fit_63_runs", |b| {
        b.iter(|| fit_parametric(&runs).unwrap())
    });
    group.sample_size(100);
    group.bench_function("isoflop_pipeline_63_runs", |b| {
        b.iter(|| isoflop_pipeline(&runs).unwrap())
    });
    group.finish();
}

fn bench_schedule_sampling(c: &mut Criterion) {
    let (spec, counts) = bench_mixture();
    let mut group = c.benchmark_group("mixture");
    group.throughput(Throughput::Elements(100_000));
    group.bench_function("sample_schedule_100k_events", |b| {
        b.iter(|| sample_schedule(&spec, &counts, 100_000).unwrap().len())
    });
    group.finish();
}

fn bench_spearman(c: &mut Criterion) {
    let (x, y) = tied_series(10_000, 5);
    let mut group = c.benchmark_group("analysis");
    group.throughput(Throughput::Elements(10_000));
    group.bench_function("spearman_10k_tied", |b| {
        b.iter(|| spearman(&x, &y).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_render_and_pack,
    bench_scaling_fits,
    bench_schedule_sampling,
    bench_spearman
);
criterion_main!(benches);
