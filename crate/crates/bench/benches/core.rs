use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use hydride_bench::{fisher_problem, vae_problem};
use hydride_core::causal::{fci, FciConfig};
use hydride_core::dataset::SplitSpec;
use hydride_core::fixture::{pcr_synthetic, synthetic_hydrides};
use hydride_core::genvae::LossWeights;
use hydride_core::pcr::{subset_experiment, KPolicy};
use hydride_core::scoring::{h_storage_score, ScoreVariant};
use hydride_core::screen::{apply_filters, FilterConfig};

fn scoring(c: &mut Criterion) {
    c.bench_function("score_10k", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..10_000 {
                let e = -1.5 + 2.0 * i as f64 / 10_000.0;
                acc += h_storage_score(black_box(e), 0.05, ScoreVariant::Modified).unwrap_or(0.0);
            }
            acc
        })
    });
}

fn causal(c: &mut Criterion) {
    let t = fisher_problem(10_000, 1);
    c.bench_function("fci_5_nodes", |b| b.iter(|| fci(black_box(&t), &FciConfig::default())));
}

fn pcr(c: &mut Criterion) {
    let records = pcr_synthetic(450, 1);
    let subsets = vec![
        vec!["e_form".to_string(), "density".to_string(), "w_h2".to_string()],
        vec!["e_form".to_string(), "density".to_string()],
    ];
    let split = SplitSpec::standard(1);
    c.bench_function("pcr_two_subsets", |b| {
        b.iter(|| {
            subset_experiment(
                black_box(&records),
                &subsets,
                "score",
                &split,
                KPolicy::default(),
                ScoreVariant::Modified,
            )
        })
    });
}

fn vae(c: &mut Criterion) {
    let (model, batch, noise) = vae_problem(18, 32, 1);
    c.bench_function("vae_loss_and_gradient_b32", |b| {
        b.iter(|| model.loss_and_gradient(black_box(&batch), &noise, LossWeights::default()))
    });
}

fn filters(c: &mut Criterion) {
    let items: Vec<_> = synthetic_hydrides(1000, 1)
        .into_iter()
        .map(|r| (r.id, r.formula))
        .collect();
    c.bench_function("filters_1000", |b| {
        b.iter(|| apply_filters(black_box(&items), &FilterConfig::default()))
    });
}

criterion_group!(benches, scoring, causal, pcr, vae, filters);
criterion_main!(benches);
