//! Shared benchmark inputs.

use hydride_core::causal::sem::LinearSem;
use hydride_core::causal::{FisherZTest, NumericTable};
use hydride_core::genvae::{Sample, VaeArch, VaeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fisher-Z test over `n` samples of a random 5-node linear SEM.
pub fn fisher_problem(n: usize, seed: u64) -> FisherZTest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sem = LinearSem::random(5, 0.5, &mut rng);
    let cols = sem.sample(n, &mut rng);
    FisherZTest::new(NumericTable::new(sem.names(), &cols).expect("table"), 0.05).expect("test")
}

/// Default-width model with a random batch and matching noise.
pub fn vae_problem(input_dim: usize, batch: usize, seed: u64) -> (VaeModel, Vec<Sample>, Vec<Vec<f64>>) {
    let model = VaeModel::new(VaeArch::new(input_dim, input_dim - 6), seed).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..batch)
        .map(|_| Sample {
            x: (0..input_dim).map(|_| rng.random_range(0.0..1.0)).collect(),
            target: Some(rng.random_range(-1.0..1.0)),
        })
        .collect();
    let noise = (0..batch)
        .map(|_| {
            (0..model.arch.latent_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    (model, samples, noise)
}
