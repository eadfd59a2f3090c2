//! Tabular variational autoencoder over composition and lattice descriptors,
//! with a property head for latent-space optimization.

mod estimator;
mod generate;
mod model;
pub mod nn;
mod train;

use serde::{Deserialize, Serialize};

use crate::chem::{Composition, Element};
use crate::dataset::MaterialRecord;
use crate::scoring::ScoreVariant;

pub use estimator::{knn_leave_one_out, EnergyEstimator, KnnEstimator, TableEstimator};
pub use generate::{
    generate, latent_optimize, Candidate, GenerateOptions, Generated, LatentOptions, LatentTrajectory, PropertyHead,
    TemplateLibrary, VaeHead,
};
pub use model::{
    compare_gradients, gradient_check, kl_divergence, numeric_gradient, reparameterize, GradCheck, LossParts,
    LossWeights, Sample, VaeArch, VaeModel, CHECKPOINT_VERSION,
};
pub use train::{evaluate, train, EpochLoss, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum VaeError {
    #[error("element {0} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("record {0} has no structure")]
    MissingStructure(String),
    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("bad hyperparameter: {0}")]
    Hyper(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, last_good: Box<TrainOutcome> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Element order of the count block, ascending atomic number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocab {
    elements: Vec<Element>,
}

impl Vocab {
    pub fn new(mut elements: Vec<Element>) -> Self {
        elements.sort();
        elements.dedup();
        Vocab { elements }
    }

    pub fn from_records(records: &[MaterialRecord]) -> Self {
        Vocab::new(records.iter().flat_map(|r| r.formula.elements()).collect())
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, e: Element) -> Option<usize> {
        self.elements.binary_search(&e).ok()
    }
}

/// Raw descriptor: element counts over the vocabulary plus the six lattice
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateVector {
    pub counts: Vec<f64>,
    pub lattice: [f64; 6],
    pub w_h2: f64,
}

impl CandidateVector {
    /// Counts rounded to integers; `None` when every count rounds to zero.
    pub fn composition(&self, vocab: &Vocab) -> Option<Composition> {
        let pairs: Vec<(Element, u32)> = vocab
            .elements()
            .iter()
            .zip(&self.counts)
            .filter_map(|(e, c)| {
                let n = c.max(0.0).round() as u32;
                (n > 0).then_some((*e, n))
            })
            .collect();
        Composition::new(pairs).ok()
    }
}

pub fn featurize(record: &MaterialRecord, vocab: &Vocab) -> Result<CandidateVector, VaeError> {
    let mut counts = vec![0.0; vocab.len()];
    for (e, n) in record.formula.iter() {
        let i = vocab
            .index_of(e)
            .ok_or_else(|| VaeError::OutOfVocabulary(e.symbol().to_string()))?;
        counts[i] = n as f64;
    }
    let s = record
        .structure
        .as_ref()
        .ok_or_else(|| VaeError::MissingStructure(record.id.clone()))?;
    Ok(CandidateVector {
        counts,
        lattice: s.lattice.as_array(),
        w_h2: record.w_h2,
    })
}

/// Normalized samples with standardized score targets.
pub fn training_samples(
    records: &[MaterialRecord],
    vocab: &Vocab,
    norm: &Normalization,
    variant: ScoreVariant,
) -> Result<Vec<Sample>, VaeError> {
    records
        .iter()
        .map(|r| {
            Ok(Sample {
                x: norm.apply(&featurize(r, vocab)?),
                target: Some(norm.score_to_unit(r.score_or_compute(variant))),
            })
        })
        .collect()
}

/// Vocabulary and normalization fitted on `records`.
pub fn fit_preprocessing(
    records: &[MaterialRecord],
    variant: ScoreVariant,
) -> Result<(Vocab, Normalization), VaeError> {
    let vocab = Vocab::from_records(records);
    let vectors = records
        .iter()
        .map(|r| featurize(r, &vocab))
        .collect::<Result<Vec<_>, _>>()?;
    let scores: Vec<f64> = records.iter().map(|r| r.score_or_compute(variant)).collect();
    let norm = Normalization::fit(&vectors, &scores)?;
    Ok((vocab, norm))
}

/// Count block divided by the per-element training maximum; lattice block
/// standardized; scores standardized for the property head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub count_scale: Vec<f64>,
    pub lattice_mean: [f64; 6],
    pub lattice_sd: [f64; 6],
    pub score_mean: f64,
    pub score_sd: f64,
}

impl Normalization {
    pub fn fit(vectors: &[CandidateVector], scores: &[f64]) -> Result<Self, VaeError> {
        let first = vectors.first().ok_or(VaeError::Empty("training set"))?;
        let dim = first.counts.len();
        let mut count_scale = vec![1.0f64; dim];
        for v in vectors {
            for (s, c) in count_scale.iter_mut().zip(&v.counts) {
                *s = s.max(*c);
            }
        }
        let n = vectors.len() as f64;
        let mut lattice_mean = [0.0; 6];
        let mut lattice_sd = [0.0; 6];
        for j in 0..6 {
            let m = vectors.iter().map(|v| v.lattice[j]).sum::<f64>() / n;
            let var = vectors.iter().map(|v| (v.lattice[j] - m).powi(2)).sum::<f64>() / n;
            lattice_mean[j] = m;
            lattice_sd[j] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        let (score_mean, score_sd) = if scores.is_empty() {
            (0.0, 1.0)
        } else {
            let m = scores.iter().sum::<f64>() / scores.len() as f64;
            let var = scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / scores.len() as f64;
            (m, if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 })
        };
        Ok(Normalization {
            count_scale,
            lattice_mean,
            lattice_sd,
            score_mean,
            score_sd,
        })
    }

    pub fn dim(&self) -> usize {
        self.count_scale.len() + 6
    }

    pub fn apply(&self, v: &CandidateVector) -> Vec<f64> {
        let mut x: Vec<f64> = v.counts.iter().zip(&self.count_scale).map(|(c, s)| c / s).collect();
        x.extend((0..6).map(|j| (v.lattice[j] - self.lattice_mean[j]) / self.lattice_sd[j]));
        x
    }

    /// Undo `apply`. Lengths are clamped to at least 1 Å and angles to
    /// [30°, 150°] so the lattice stays physical.
    pub fn invert(&self, x: &[f64]) -> CandidateVector {
        let k = self.count_scale.len();
        let counts: Vec<f64> = x[..k]
            .iter()
            .zip(&self.count_scale)
            .map(|(v, s)| (v * s).max(0.0))
            .collect();
        let mut lattice = [0.0; 6];
        for j in 0..6 {
            let v = x[k + j] * self.lattice_sd[j] + self.lattice_mean[j];
            lattice[j] = if j < 3 { v.max(1.0) } else { v.clamp(30.0, 150.0) };
        }
        CandidateVector {
            counts,
            lattice,
            w_h2: 0.0,
        }
    }

    pub fn score_to_unit(&self, s: f64) -> f64 {
        (s - self.score_mean) / self.score_sd
    }

    pub fn unit_to_score(&self, u: f64) -> f64 {
        u * self.score_sd + self.score_mean
    }

    pub fn is_valid(&self) -> bool {
        self.count_scale.iter().all(|s| s.is_finite() && *s > 0.0)
            && self.lattice_sd.iter().all(|s| s.is_finite() && *s > 0.0)
            && self.lattice_mean.iter().all(|m| m.is_finite())
            && self.score_mean.is_finite()
            && self.score_sd.is_finite()
            && self.score_sd > 0.0
    }
}
