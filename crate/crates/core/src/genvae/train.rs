use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{LossParts, LossWeights, Sample, VaeModel};
use super::VaeError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weights: LossWeights,
    /// Rescale the full gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            weights: LossWeights::default(),
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: String| Err(VaeError::Hyper(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weights.beta >= 0.0 && self.weights.gamma >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("clip_norm {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub train: LossParts,
    /// Noise-free loss on the validation set after the epoch.
    pub val: LossParts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: VaeModel,
    pub best_epoch: usize,
    pub history: Vec<EpochLoss>,
}

/// Loss with the latent noise set to zero, i.e. decoding the posterior mean.
pub fn evaluate(model: &VaeModel, samples: &[Sample], w: LossWeights) -> Result<LossParts, VaeError> {
    let noise = vec![vec![0.0; model.latent_dim()]; samples.len()];
    model.loss(samples, &noise, w)
}

fn finite(p: &LossParts) -> bool {
    p.total.is_finite()
}

pub fn train(
    model: &VaeModel,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome, VaeError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(VaeError::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(VaeError::Empty("validation set"));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.to_flat();
    let mut velocity = vec![0.0; params.len()];
    let mut current = model.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let latent = model.latent_dim();

    let initial_val = evaluate(&current, val_set, config.weights)?;
    let mut best = (initial_val.total, 0usize, current.clone());
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts::default();
        let mut n_batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let noise: Vec<Vec<f64>> = (0..batch.len())
                .map(|_| (0..latent).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let (parts, grads) = current.loss_and_gradient(&batch, &noise, config.weights)?;
            let mut g = grads.to_flat();
            if !finite(&parts) || g.iter().any(|v| !v.is_finite()) {
                return Err(diverged(epoch, best, history));
            }
            if let Some(c) = config.clip_norm {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > c {
                    let s = c / norm;
                    g.iter_mut().for_each(|v| *v *= s);
                }
            }
            for ((p, v), gi) in params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = config.momentum * *v + gi;
                *p -= config.learning_rate * *v;
            }
            current.load_flat(&params);
            sum.total += parts.total;
            sum.mse += parts.mse;
            sum.kl += parts.kl;
            sum.prop += parts.prop;
            n_batches += 1.0;
        }
        let train_loss = LossParts {
            total: sum.total / n_batches,
            mse: sum.mse / n_batches,
            kl: sum.kl / n_batches,
            prop: sum.prop / n_batches,
        };
        let val = evaluate(&current, val_set, config.weights)?;
        if !finite(&val) {
            return Err(diverged(epoch, best, history));
        }
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            val,
        });
        if val.total < best.0 {
            best = (val.total, epoch, current.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.1,
        history,
    })
}

fn diverged(epoch: usize, best: (f64, usize, VaeModel), history: Vec<EpochLoss>) -> VaeError {
    log::error!(
        "training diverged at epoch {epoch}; keeping weights from epoch {}",
        best.1
    );
    VaeError::Diverged {
        epoch,
        last_good: Box::new(TrainOutcome {
            model: best.2,
            best_epoch: best.1,
            history,
        }),
    }
}
