use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cxreval_core::labeler::Labeler;
use cxreval_core::metrics::{
    bootstrap_ci, chi_square_sf, cochran_q, BootstrapConfig, BootstrapTarget, PairTable,
};
use cxreval_core::normalizer::Refiner;
use cxreval_core::{
    extract_sections, refine_rule_based, ExclusionConfig, Finding, FindingLabel, LabelVector,
    Lexicon, RefinementRules,
};

const REPORT: &str = "Findings: The cardiomediastinal silhouette is mildly enlarged. There is a small left \
pleural effusion with adjacent atelectasis. No pneumothorax. No focal consolidation, pulmonary edema, or \
pneumonia. Endotracheal tube terminates 4 cm above the carina.\nImpression: Mild cardiomegaly. Small left \
effusion, decreased since the prior study.";

fn labeler(c: &mut Criterion) {
    let lex = Lexicon::default();
    let labeler = Labeler::new(&lex);
    let report = extract_sections("bench", REPORT).unwrap();
    c.bench_function("extract_sections", |b| {
        b.iter(|| extract_sections("bench", black_box(REPORT)))
    });
    c.bench_function("label_report", |b| {
        b.iter(|| labeler.label(black_box(&report)))
    });
    let rules = RefinementRules::default();
    c.bench_function("refine_rule_based", |b| {
        b.iter(|| refine_rule_based(black_box(&report), &rules))
    });
    let refiner = Refiner::new(&rules);
    c.bench_function("refiner_refine", |b| {
        b.iter(|| refiner.refine(black_box(&report)))
    });
}

/// Deterministic label vectors without pulling in an RNG.
fn vectors(n: usize, salt: usize) -> Vec<LabelVector> {
    let values = [
        FindingLabel::Positive,
        FindingLabel::Negative,
        FindingLabel::Negative,
        FindingLabel::Uncertain,
        FindingLabel::NotMentioned,
    ];
    (0..n)
        .map(|i| {
            let mut v = LabelVector::default();
            for (k, f) in Finding::ALL.iter().enumerate() {
                v.set(*f, values[(i * 7 + k * 3 + salt * (i % 3)) % values.len()]);
            }
            v
        })
        .collect()
}

fn bootstrap(c: &mut Criterion) {
    let mut group = c.benchmark_group("bootstrap_ci");
    group.sample_size(10);
    for n in [100, 1000] {
        let gt = vectors(n, 0);
        let pred = vectors(n, 1);
        let table = PairTable::new(&gt, &pred, &Finding::ALL, &ExclusionConfig::default()).unwrap();
        let config = BootstrapConfig::default();
        group.bench_with_input(BenchmarkId::new("micro_1000_iter", n), &table, |b, t| {
            b.iter(|| bootstrap_ci(t, BootstrapTarget::Micro, &config))
        });
    }
    group.finish();
}

fn statistics(c: &mut Criterion) {
    c.bench_function("chi_square_sf", |b| {
        b.iter(|| {
            (1..=10)
                .map(|df| chi_square_sf(black_box(df as f64 * 1.7), df).unwrap())
                .sum::<f64>()
        })
    });
    let rows: Vec<Vec<bool>> = (0..150).map(|i| vec![i % 3 != 0, i % 4 != 0]).collect();
    c.bench_function("cochran_q_150x2", |b| {
        b.iter(|| cochran_q(black_box(&rows)))
    });
}

criterion_group!(benches, labeler, bootstrap, statistics);
criterion_main!(benches);
