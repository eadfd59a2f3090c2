//! Train on the synthetic hydride fixture, generate, and estimate energies.

use std::time::Instant;

use hydride_core::dataset::{split, SplitSpec};
use hydride_core::fixture::synthetic_hydrides;
use hydride_core::genvae::{
    evaluate, fit_preprocessing, generate, knn_leave_one_out, train, training_samples, EnergyEstimator,
    GenerateOptions, KnnEstimator, TemplateLibrary, TrainConfig, VaeArch, VaeModel,
};
use hydride_core::ScoreVariant;

#[test]
fn fixture_pipeline_generates_exact_count() {
    let records = synthetic_hydrides(450, 7);
    let parts = split(&records, &SplitSpec::standard(7)).unwrap();
    let v = ScoreVariant::Modified;
    let (vocab, norm) = fit_preprocessing(&parts.train, v).unwrap();
    let tr = training_samples(&parts.train, &vocab, &norm, v).unwrap();
    let va = training_samples(&parts.val, &vocab, &norm, v).unwrap();
    let model = VaeModel::new(VaeArch::new(norm.dim(), vocab.len()), 7).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        seed: 7,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let out = train(&model, &tr, &va, &cfg).unwrap();
    eprintln!("train: {:?}, best epoch {}", t.elapsed(), out.best_epoch);
    let before = evaluate(&model, &va, cfg.weights).unwrap().total;
    let after = evaluate(&out.model, &va, cfg.weights).unwrap().total;
    assert!(after < before, "{before} -> {after}");

    let lib = TemplateLibrary::from_records(&parts.train, &vocab, &norm).unwrap();
    let opts = GenerateOptions {
        n: 1000,
        seed: 7,
        ..GenerateOptions::default()
    };
    let t = Instant::now();
    let gen = generate(&out.model, &vocab, &norm, &lib, &opts).unwrap();
    eprintln!("generate: {:?}, discarded {}", t.elapsed(), gen.discarded.len());
    assert_eq!(gen.candidates.len(), 1000);
    let again = generate(&out.model, &vocab, &norm, &lib, &opts).unwrap();
    assert_eq!(gen, again);

    let x: Vec<Vec<f64>> = tr.iter().map(|s| s.x.clone()).collect();
    let e: Vec<f64> = parts.train.iter().map(|r| r.e_form).collect();
    let knn = KnnEstimator::fit(x, e, KnnEstimator::DEFAULT_K).unwrap();
    let mae = knn_leave_one_out(&knn).unwrap();
    eprintln!("knn leave-one-out MAE {mae:.4}");
    assert!(mae.is_finite());
    for c in &gen.candidates {
        assert!(knn.predict(&c.formula, &c.x).is_finite());
        assert!(c.structure.validate().is_ok());
    }
}
