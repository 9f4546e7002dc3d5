//! Deterministic fixtures shared by the criterion benches: synthetic
//! documents for the render/pack path and a noise-free run grid for the
//! fitters. Everything is seeded so repeat runs measure the same work.

use std::collections::BTreeMap;

use soda_core::corpus::{Document, Utterance};
use soda_core::mixture::{MixtureSpec, SplitMix64};
use soda_core::scaling::{AllocationLaws, ParametricFit, RunRecord};
use soda_core::vocab::VocabLayout;

/// Random small documents in the shape the packer sees in practice:
/// a few utterances each, short transcripts, a handful of frames.
pub fn synthetic_documents(count: usize, seed: u64) -> Vec<Document> {
    let layout = VocabLayout::default();
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|i| Document {
            doc_id: format!("doc-{i:05}"),
            source: "bench".to_string(),
            utterances: (0..1 + rng.next_below(3))
                .map(|_| Utterance {
                    text_ids: (0..rng.next_below(12))
                        .map(|_| rng.next_below(u64::from(layout.text_size())) as u32)
                        .collect(),
                    codes: (0..2 + rng.next_below(10))
                        .map(|_| {
                            (0..layout.num_codebooks())
                                .map(|_| rng.next_below(u64::from(layout.codebook_size())) as u32)
                                .collect()
                        })
                        .collect(),
                    duration_s: None,
                })
                .collect(),
        })
        .collect()
}

/// Noise-free losses from a reference surface over 7 budgets x 9 sizes;
/// the workload the multi-start fitter is sized for.
pub fn reference_runs() -> Vec<RunRecord> {
    let fit = ParametricFit {
        e: 3.169,
        a: 215_886.0,
        alpha: 0.684,
        b: 4_750.0,
        beta: 0.439,
        r2_raw: 1.0,
        r2_log: 1.0,
        objective: 0.0,
    };
    let laws = AllocationLaws::from_parametric(&fit).unwrap();
    let mut runs = Vec::new();
    for k in 0..7 {
        let budget = 3e18 * 100f64.powf(k as f64 / 6.0);
        let n_star = laws.n_law.evaluate(budget);
        for i in -4..=4i32 {
            let n = n_star * 2f64.powf(i as f64 / 2.0);
            let d = budget / (6.0 * n);
            runs.push(RunRecord::new(n, d, Some(budget), fit.predict(n, d)).unwrap());
        }
    }
    runs
}

/// A four-source mixture with enough documents to sample without
/// exhaustion at bench sizes.
pub fn bench_mixture() -> (MixtureSpec, BTreeMap<String, u64>) {
    let spec = MixtureSpec {
        entries: vec![
            ("text".to_string(), 0.05),
            ("asr_long".to_string(), 0.516),
            ("asr_short".to_string(), 0.288),
            ("dialog".to_string(), 0.146),
        ],
        seed: 11,
        max_epochs: 4,
    };
    let counts = [
        ("text".to_string(), 50_000),
        ("asr_long".to_string(), 50_000),
        ("asr_short".to_string(), 30_000),
        ("dialog".to_string(), 20_000),
    ]
    .into();
    (spec, counts)
}

/// Two correlated noisy series with ties, for the rank-correlation bench.
pub fn tied_series(len: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(seed);
    let x: Vec<f64> = (0..len).map(|_| rng.next_below(64) as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 8.0 * rng.next_f64()).collect();
    (x, y)
}
