use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{sigmoid, softplus, Mlp, MlpCache};
use super::{Normalization, VaeError, Vocab};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Layer sizes. The encoder maps `input_dim` through `hidden` to
/// `2 * latent_dim`; the decoder mirrors it back; the property head maps the
/// latent vector through `head_hidden` to one standardized score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeArch {
    pub input_dim: usize,
    /// Leading outputs that are element counts (softplus); the rest are linear.
    pub n_counts: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl VaeArch {
    pub fn new(input_dim: usize, n_counts: usize) -> Self {
        VaeArch {
            input_dim,
            n_counts,
            latent_dim: 8,
            hidden: vec![64],
            head_hidden: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub arch: VaeArch,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub head: Mlp,
    pub seed: u64,
}

/// One training example: normalized descriptor plus optional standardized score.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// KL weight.
    pub beta: f64,
    /// Property-head weight.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { beta: 1.0, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub prop: f64,
}

pub fn reparameterize(mu: &[f64], log_var: &[f64], noise: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// KL(q || N(0, I)) for a diagonal Gaussian q.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

struct Pass {
    enc: MlpCache,
    dec: MlpCache,
    out: Vec<f64>,
    head: Option<MlpCache>,
}

fn sizes(n_in: usize, hidden: &[usize], n_out: usize) -> Vec<usize> {
    let mut s = vec![n_in];
    s.extend_from_slice(hidden);
    s.push(n_out);
    s
}

impl VaeModel {
    pub fn new(arch: VaeArch, seed: u64) -> Result<Self, VaeError> {
        if arch.input_dim == 0 || arch.latent_dim == 0 || arch.n_counts > arch.input_dim {
            return Err(VaeError::InvalidModel(format!("bad architecture {arch:?}")));
        }
        if arch.hidden.iter().chain(&arch.head_hidden).any(|&h| h == 0) {
            return Err(VaeError::InvalidModel("zero-width hidden layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::init(&sizes(arch.input_dim, &arch.hidden, 2 * arch.latent_dim), &mut rng);
        let rev: Vec<usize> = arch.hidden.iter().rev().copied().collect();
        let decoder = Mlp::init(&sizes(arch.latent_dim, &rev, arch.input_dim), &mut rng);
        let head = Mlp::init(&sizes(arch.latent_dim, &arch.head_hidden, 1), &mut rng);
        Ok(VaeModel {
            arch,
            encoder,
            decoder,
            head,
            seed,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        let a = &self.arch;
        let bad = |m: &str| Err(VaeError::InvalidModel(m.to_string()));
        for (name, net) in [
            ("encoder", &self.encoder),
            ("decoder", &self.decoder),
            ("head", &self.head),
        ] {
            if !net.is_valid() {
                return Err(VaeError::InvalidModel(format!(
                    "{name}: inconsistent or non-finite weights"
                )));
            }
        }
        if self.encoder.n_in() != a.input_dim || self.encoder.n_out() != 2 * a.latent_dim {
            return bad("encoder must map input_dim to 2 * latent_dim");
        }
        if self.decoder.n_in() != a.latent_dim || self.decoder.n_out() != a.input_dim {
            return bad("decoder must map latent_dim to input_dim");
        }
        if self.head.n_in() != a.latent_dim || self.head.n_out() != 1 {
            return bad("property head must map latent_dim to 1");
        }
        if a.n_counts > a.input_dim {
            return bad("n_counts exceeds input_dim");
        }
        Ok(())
    }

    fn check_dim(expected: usize, got: usize) -> Result<(), VaeError> {
        if expected == got {
            Ok(())
        } else {
            Err(VaeError::Dimension { expected, got })
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
        Self::check_dim(self.arch.input_dim, x.len())?;
        let mut out = self.encoder.forward(x).out;
        let log_var = out.split_off(self.arch.latent_dim);
        Ok((out, log_var))
    }

    fn output_activation(&self, pre: &[f64]) -> Vec<f64> {
        pre.iter()
            .enumerate()
            .map(|(i, &v)| if i < self.arch.n_counts { softplus(v) } else { v })
            .collect()
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, VaeError> {
        Self::check_dim(self.arch.latent_dim, z.len())?;
        Ok(self.output_activation(&self.decoder.forward(z).out))
    }

    /// Standardized score predicted from a latent point.
    pub fn predict_property(&self, z: &[f64]) -> Result<f64, VaeError> {
        Self::check_dim(self.arch.latent_dim, z.len())?;
        Ok(self.head.forward(z).out[0])
    }

    /// d(head)/dz.
    pub fn property_gradient(&self, z: &[f64]) -> Result<Vec<f64>, VaeError> {
        Self::check_dim(self.arch.latent_dim, z.len())?;
        let cache = self.head.forward(z);
        let mut scratch = self.head.zeros_like();
        Ok(self.head.backward(&cache, &[1.0], &mut scratch))
    }

    fn pass(&self, s: &Sample, noise: &[f64]) -> Pass {
        let enc = self.encoder.forward(&s.x);
        let l = self.arch.latent_dim;
        let z = reparameterize(&enc.out[..l], &enc.out[l..], noise);
        let dec = self.decoder.forward(&z);
        let out = self.output_activation(&dec.out);
        let head = s.target.map(|_| self.head.forward(&z));
        Pass { enc, dec, out, head }
    }

    fn check_batch(&self, batch: &[Sample], noise: &[Vec<f64>]) -> Result<(), VaeError> {
        if batch.is_empty() {
            return Err(VaeError::Empty("batch"));
        }
        Self::check_dim(batch.len(), noise.len())?;
        for (s, e) in batch.iter().zip(noise) {
            Self::check_dim(self.arch.input_dim, s.x.len())?;
            Self::check_dim(self.arch.latent_dim, e.len())?;
        }
        Ok(())
    }

    /// mse + beta * kl + gamma * prop, each averaged over the batch. `mse`
    /// also averages over output dimensions; `prop` averages over samples
    /// that carry a target.
    pub fn loss(&self, batch: &[Sample], noise: &[Vec<f64>], w: LossWeights) -> Result<LossParts, VaeError> {
        self.check_batch(batch, noise)?;
        Ok(self.loss_from_passes(batch, &self.passes(batch, noise), w))
    }

    fn passes(&self, batch: &[Sample], noise: &[Vec<f64>]) -> Vec<Pass> {
        batch.iter().zip(noise).map(|(s, e)| self.pass(s, e)).collect()
    }

    fn loss_from_passes(&self, batch: &[Sample], passes: &[Pass], w: LossWeights) -> LossParts {
        let b = batch.len() as f64;
        let d = self.arch.input_dim as f64;
        let l = self.arch.latent_dim;
        let n_prop = batch.iter().filter(|s| s.target.is_some()).count();
        let mut parts = LossParts::default();
        for (s, p) in batch.iter().zip(passes) {
            parts.mse += p.out.iter().zip(&s.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (d * b);
            parts.kl += kl_divergence(&p.enc.out[..l], &p.enc.out[l..]) / b;
            if let (Some(t), Some(h)) = (s.target, &p.head) {
                parts.prop += (h.out[0] - t).powi(2) / n_prop as f64;
            }
        }
        parts.total = parts.mse + w.beta * parts.kl + w.gamma * parts.prop;
        parts
    }

    /// Loss and its gradient with respect to every parameter, in the same
    /// layout as `to_flat`.
    pub fn loss_and_gradient(
        &self,
        batch: &[Sample],
        noise: &[Vec<f64>],
        w: LossWeights,
    ) -> Result<(LossParts, VaeModel), VaeError> {
        self.check_batch(batch, noise)?;
        let passes = self.passes(batch, noise);
        let parts = self.loss_from_passes(batch, &passes, w);
        let mut grads = VaeModel {
            arch: self.arch.clone(),
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            head: self.head.zeros_like(),
            seed: self.seed,
        };
        let b = batch.len() as f64;
        let d = self.arch.input_dim as f64;
        let l = self.arch.latent_dim;
        let n_prop = batch.iter().filter(|s| s.target.is_some()).count() as f64;
        for ((s, p), eps) in batch.iter().zip(&passes).zip(noise) {
            let g_out: Vec<f64> = (0..self.arch.input_dim)
                .map(|i| {
                    let g = 2.0 * (p.out[i] - s.x[i]) / (d * b);
                    if i < self.arch.n_counts {
                        g * sigmoid(p.dec.out[i])
                    } else {
                        g
                    }
                })
                .collect();
            let mut g_z = self.decoder.backward(&p.dec, &g_out, &mut grads.decoder);
            if let (Some(t), Some(h)) = (s.target, &p.head) {
                let g_h = w.gamma * 2.0 * (h.out[0] - t) / n_prop;
                let g_zh = self.head.backward(h, &[g_h], &mut grads.head);
                for (a, b) in g_z.iter_mut().zip(g_zh) {
                    *a += b;
                }
            }
            let mu = &p.enc.out[..l];
            let lv = &p.enc.out[l..];
            let mut g_enc = vec![0.0; 2 * l];
            for j in 0..l {
                let sd = (0.5 * lv[j]).exp();
                g_enc[j] = g_z[j] + w.beta * mu[j] / b;
                g_enc[l + j] = g_z[j] * eps[j] * 0.5 * sd + w.beta * 0.5 * (lv[j].exp() - 1.0) / b;
            }
            self.encoder.backward(&p.enc, &g_enc, &mut grads.encoder);
        }
        Ok((parts, grads))
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count() + self.head.param_count()
    }

    /// Encoder, decoder, head parameters in one vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        self.encoder.flatten_into(&mut v);
        self.decoder.flatten_into(&mut v);
        self.head.flatten_into(&mut v);
        v
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter count");
        let a = self.encoder.load_flat(flat);
        let b = self.decoder.load_flat(&flat[a..]);
        self.head.load_flat(&flat[a + b..]);
    }

    pub fn save(&self, path: &Path, vocab: &Vocab, norm: &Normalization) -> Result<(), VaeError> {
        let ck = Checkpoint {
            format: "hydride-vae".into(),
            version: CHECKPOINT_VERSION,
            vocab: vocab.clone(),
            normalization: norm.clone(),
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(VaeModel, Vocab, Normalization), VaeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<(VaeModel, Vocab, Normalization), VaeError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != "hydride-vae" {
            return Err(VaeError::Checkpoint(format!("unexpected format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(VaeError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        ck.model.validate()?;
        if ck.vocab.len() != ck.model.arch.n_counts || ck.normalization.dim() != ck.model.arch.input_dim {
            return Err(VaeError::Checkpoint(
                "vocabulary or normalization does not match the model".into(),
            ));
        }
        if !ck.normalization.is_valid() {
            return Err(VaeError::Checkpoint("invalid normalization".into()));
        }
        Ok((ck.model, ck.vocab, ck.normalization))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    vocab: Vocab,
    normalization: Normalization,
    model: VaeModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub n_params: usize,
}

/// Relative error |a - n| / max(|a|, |n|, floor) per parameter.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], floor: f64) -> GradCheck {
    let mut worst = (0.0f64, 0usize);
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    GradCheck {
        max_rel_err: worst.0,
        worst_param: worst.1,
        n_params: analytic.len(),
    }
}

/// Central differences of the total loss over every parameter.
pub fn numeric_gradient(
    model: &VaeModel,
    batch: &[Sample],
    noise: &[Vec<f64>],
    w: LossWeights,
    epsilon: f64,
) -> Result<Vec<f64>, VaeError> {
    let base = model.to_flat();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + epsilon;
        probe.load_flat(&p);
        let up = probe.loss(batch, noise, w)?.total;
        p[i] = base[i] - epsilon;
        probe.load_flat(&p);
        let down = probe.loss(batch, noise, w)?.total;
        p[i] = base[i];
        out.push((up - down) / (2.0 * epsilon));
    }
    Ok(out)
}

/// Compare the analytic gradient with central finite differences.
pub fn gradient_check(
    model: &VaeModel,
    batch: &[Sample],
    noise: &[Vec<f64>],
    w: LossWeights,
    epsilon: f64,
) -> Result<GradCheck, VaeError> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(VaeError::Hyper(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    let (_, grads) = model.loss_and_gradient(batch, noise, w)?;
    let numeric = numeric_gradient(model, batch, noise, w, epsilon)?;
    Ok(compare_gradients(&grads.to_flat(), &numeric, 1e-7))
}
