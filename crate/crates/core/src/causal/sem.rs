//! Linear-Gaussian structural equation models for synthetic benchmarks.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;

pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// x_j = sum_i w_ij x_i + e_j with unit-variance Gaussian noise over an
/// acyclic edge list `(from, to, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSem {
    pub n_vars: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl LinearSem {
    pub fn new(n_vars: usize, edges: Vec<(usize, usize, f64)>) -> Self {
        for &(from, to, _) in &edges {
            assert!(from != to && from < n_vars && to < n_vars, "bad edge {from}->{to}");
        }
        LinearSem { n_vars, edges }
    }

    /// Random DAG: each forward pair gets an edge with probability `p` and a
    /// weight drawn from ±[0.5, 1.0].
    pub fn random<R: Rng + ?Sized>(n_vars: usize, p: f64, rng: &mut R) -> Self {
        let mut edges = Vec::new();
        for from in 0..n_vars {
            for to in from + 1..n_vars {
                if rng.random_bool(p) {
                    let w: f64 = rng.random_range(0.5..1.0);
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    edges.push((from, to, sign * w));
                }
            }
        }
        LinearSem { n_vars, edges }
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.n_vars).map(|i| format!("x{i}")).collect()
    }

    /// Unordered adjacent pairs `(min, max)`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect()
    }

    /// `n` samples, returned column-wise.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        // Kahn's algorithm keeps this correct for hand-built edge lists too.
        let mut indegree = vec![0usize; self.n_vars];
        for &(_, to, _) in &self.edges {
            indegree[to] += 1;
        }
        let mut ready: Vec<usize> = (0..self.n_vars).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n_vars);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &(from, to, _) in &self.edges {
                if from == v {
                    indegree[to] -= 1;
                    if indegree[to] == 0 {
                        ready.push(to);
                    }
                }
            }
        }
        assert_eq!(order.len(), self.n_vars, "edge list has a cycle");
        let mut cols: Vec<Vec<f64>> = (0..self.n_vars).map(|_| standard_normals(rng, n)).collect();
        for &v in &order {
            for &(from, to, w) in &self.edges {
                if to == v {
                    let (src, dst) = if from < to {
                        let (l, r) = cols.split_at_mut(to);
                        (&l[from], &mut r[0])
                    } else {
                        let (l, r) = cols.split_at_mut(from);
                        (&r[0], &mut l[to])
                    };
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d += w * s;
                    }
                }
            }
        }
        cols
    }
}
