//! Dense layers with tanh hidden activations and hand-written backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major, `n_out` rows of `n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let mut d = Dense::zeros(n_in, n_out);
        for w in &mut d.w {
            *w = rng.random_range(-limit..limit);
        }
        d
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                self.b[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn is_consistent(&self) -> bool {
        self.w.len() == self.n_in * self.n_out && self.b.len() == self.n_out
    }
}

/// Affine layers; tanh between them, the last one left linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs from a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

impl Mlp {
    /// `sizes` runs input, hidden..., output.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("non-empty").n_out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n_in()];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.apply(&a);
            if i != last {
                for v in &mut pre {
                    *v = v.tanh();
                }
            }
            inputs.push(std::mem::replace(&mut a, pre));
        }
        MlpCache { inputs, out: a }
    }

    /// Accumulate parameter gradients into `grads` given dL/d(out); returns
    /// dL/d(input).
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let gl = &mut grads.layers[l];
            for o in 0..layer.n_out {
                gl.b[o] += g[o];
                let row = &mut gl.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (w, v) in row.iter_mut().zip(input) {
                    *w += g[o] * v;
                }
            }
            let mut gin = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += g[o] * w;
                }
            }
            if l > 0 {
                // input is the tanh output of the previous layer.
                for (gi, a) in gin.iter_mut().zip(input) {
                    *gi *= 1.0 - a * a;
                }
            }
            g = gin;
        }
        g
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    /// Read parameters back in `flatten_into` order; returns how many were used.
    pub fn load_flat(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&src[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&src[at..at + nb]);
            at += nb;
        }
        at
    }

    pub fn is_valid(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.iter().all(Dense::is_consistent)
            && self.layers.windows(2).all(|w| w[0].n_out == w[1].n_in)
            && self
                .layers
                .iter()
                .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::init(&[3, 4, 2], &mut rng);
        let x = [0.3, -0.7, 1.1];
        // L = sum(out * c)
        let c = [0.5, -1.5];
        let loss = |n: &Mlp| n.forward(&x).out.iter().zip(&c).map(|(o, c)| o * c).sum::<f64>();
        let mut grads = net.zeros_like();
        let gx = net.backward(&net.forward(&x), &c, &mut grads);
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += 1e-6;
            net.load_flat(&p);
            let up = loss(&net);
            p[i] -= 2e-6;
            net.load_flat(&p);
            let down = loss(&net);
            assert!(((up - down) / 2e-6 - analytic[i]).abs() < 1e-8);
        }
        net.load_flat(&flat);
        for j in 0..3 {
            let mut xp = x;
            xp[j] += 1e-6;
            let up = net.forward(&xp).out.iter().zip(&c).map(|(o, c)| o * c).sum::<f64>();
            xp[j] -= 2e-6;
            let down = net.forward(&xp).out.iter().zip(&c).map(|(o, c)| o * c).sum::<f64>();
            assert!(((up - down) / 2e-6 - gx[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn stable_activations() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
