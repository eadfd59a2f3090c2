//! Formation-energy estimators for generated candidates.

use std::collections::BTreeMap;

use crate::chem::Composition;

use super::VaeError;

/// Predicts formation energy (eV/atom) for a candidate given its composition
/// and normalized descriptor.
pub trait EnergyEstimator: Sync {
    fn id(&self) -> &str;
    fn predict(&self, formula: &Composition, x: &[f64]) -> f64;
}

/// Inverse-distance weighted k-nearest-neighbour regression.
#[derive(Debug, Clone)]
pub struct KnnEstimator {
    k: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl KnnEstimator {
    pub const DEFAULT_K: usize = 5;

    pub fn fit(points: Vec<Vec<f64>>, values: Vec<f64>, k: usize) -> Result<Self, VaeError> {
        if points.is_empty() {
            return Err(VaeError::Empty("estimator training set"));
        }
        if k == 0 {
            return Err(VaeError::Hyper("k must be positive".into()));
        }
        if points.len() != values.len() {
            return Err(VaeError::Dimension {
                expected: points.len(),
                got: values.len(),
            });
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(VaeError::Dimension {
                expected: dim,
                got: p.len(),
            });
        }
        if points.len() < k {
            log::warn!("knn: only {} training points for k = {k}", points.len());
        }
        Ok(KnnEstimator { k, points, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn predict_excluding(&self, x: &[f64], skip: Option<usize>) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(self.k);
        // An exact hit dominates every finite weight.
        let hits: Vec<f64> = d
            .iter()
            .filter(|(dist, _)| *dist == 0.0)
            .map(|&(_, i)| self.values[i])
            .collect();
        if !hits.is_empty() {
            return hits.iter().sum::<f64>() / hits.len() as f64;
        }
        let (num, den) = d.iter().fold((0.0, 0.0), |(n, w), &(dist, i)| {
            (n + self.values[i] / dist, w + 1.0 / dist)
        });
        num / den
    }

    pub fn predict_point(&self, x: &[f64]) -> f64 {
        self.predict_excluding(x, None)
    }
}

impl EnergyEstimator for KnnEstimator {
    fn id(&self) -> &str {
        "knn"
    }

    fn predict(&self, _formula: &Composition, x: &[f64]) -> f64 {
        self.predict_point(x)
    }
}

/// Mean absolute error when each training point is predicted from the others.
pub fn knn_leave_one_out(est: &KnnEstimator) -> Result<f64, VaeError> {
    if est.len() < 2 {
        return Err(VaeError::Empty("leave-one-out needs two points"));
    }
    let total: f64 = (0..est.len())
        .map(|i| (est.predict_excluding(&est.points[i], Some(i)) - est.values[i]).abs())
        .sum();
    Ok(total / est.len() as f64)
}

/// Externally supplied energies keyed by formula, falling back to another
/// estimator for formulas not in the table.
pub struct TableEstimator<F> {
    table: BTreeMap<Composition, f64>,
    fallback: F,
}

impl<F: EnergyEstimator> TableEstimator<F> {
    pub fn new(table: BTreeMap<Composition, f64>, fallback: F) -> Self {
        TableEstimator { table, fallback }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl<F: EnergyEstimator> EnergyEstimator for TableEstimator<F> {
    fn id(&self) -> &str {
        "table"
    }

    fn predict(&self, formula: &Composition, x: &[f64]) -> f64 {
        match self.table.get(formula) {
            Some(v) => *v,
            None => self.fallback.predict(formula, x),
        }
    }
}
