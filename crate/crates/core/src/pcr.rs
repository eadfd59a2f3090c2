//! Principal component regression over feature subsets.

use std::io::Write;

use rayon::prelude::*;

use crate::dataset::{feature_matrix, split_indices, DatasetError, MaterialRecord, SplitSpec};
use crate::linalg::{mean, symmetric_eigen, Matrix};
use crate::scoring::ScoreVariant;

#[derive(Debug, thiserror::Error)]
pub enum PcrError {
    #[error("need more rows than features (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("k = {k} outside 1..={p}")]
    BadK { k: usize, p: usize },
    #[error("variance fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("column {0:?} is constant")]
    ConstantColumn(String),
    #[error("non-finite value in column {0:?}")]
    NonFinite(String),
    #[error("expected {expected} columns, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{0} rows but {1} targets")]
    Length(usize, usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KPolicy {
    Fixed(usize),
    /// Smallest k whose components explain at least this fraction of variance.
    VarianceFraction(f64),
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::VarianceFraction(0.95)
    }
}

impl std::fmt::Display for KPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KPolicy::Fixed(k) => write!(f, "k={k}"),
            KPolicy::VarianceFraction(v) => write!(f, "variance>={v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcrModel {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// p x k; column j is the j-th loading vector.
    pub components: Matrix,
    /// All p eigenvalues of the standardized covariance, descending.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub warnings: Vec<String>,
}

fn check_finite(x: &Matrix, names: &[String]) -> Result<(), PcrError> {
    for j in 0..x.cols() {
        if (0..x.rows()).any(|i| !x[(i, j)].is_finite()) {
            return Err(PcrError::NonFinite(names[j].clone()));
        }
    }
    Ok(())
}

/// Standardize (population scale), diagonalize the covariance, regress `y`
/// on the leading k component scores.
pub fn pcr_fit(x: &Matrix, y: &[f64], feature_names: &[String], policy: KPolicy) -> Result<PcrModel, PcrError> {
    let (n, p) = (x.rows(), x.cols());
    if feature_names.len() != p {
        return Err(PcrError::Dimension {
            expected: p,
            got: feature_names.len(),
        });
    }
    if y.len() != n {
        return Err(PcrError::Length(n, y.len()));
    }
    if p == 0 || n <= p {
        return Err(PcrError::TooFewRows { n, p });
    }
    check_finite(x, feature_names)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(PcrError::NonFinite("target".into()));
    }

    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let m = mean(&col);
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        if var.sqrt() <= 1e-12 * m.abs().max(1.0) {
            return Err(PcrError::ConstantColumn(feature_names[j].clone()));
        }
        means.push(m);
        scales.push(var.sqrt());
    }
    let z = standardize(x, &means, &scales);
    let mut cov = z.transpose().matmul(&z);
    for i in 0..p {
        for j in 0..p {
            cov[(i, j)] /= n as f64;
        }
    }
    let eig = symmetric_eigen(&cov);
    let eigenvalues: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();

    let mut warnings = Vec::new();
    let total: f64 = eigenvalues.iter().sum();
    let rank = eigenvalues.iter().filter(|&&v| v > 1e-10 * eigenvalues[0]).count();
    let wanted = match policy {
        KPolicy::Fixed(k) => {
            if k == 0 || k > p {
                return Err(PcrError::BadK { k, p });
            }
            k
        }
        KPolicy::VarianceFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(PcrError::BadFraction(f));
            }
            let mut acc = 0.0;
            let mut k = p;
            for (i, v) in eigenvalues.iter().enumerate() {
                acc += v;
                if acc >= f * total - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let k = if wanted > rank {
        let msg = format!("input has rank {rank}; keeping {rank} of {wanted} requested components");
        log::warn!("{msg}");
        warnings.push(msg);
        rank
    } else {
        wanted
    };

    let mut components = Matrix::zeros(p, k);
    for c in 0..k {
        let v = eig.vectors.column(c);
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            components[(r, c)] = sign * v[r];
        }
    }

    // Component scores are orthogonal with zero mean, so each coefficient is a
    // separate projection and the intercept is mean(y).
    let scores = z.matmul(&components);
    let intercept = mean(y);
    let coefficients = (0..k)
        .map(|c| {
            let s = scores.column(c);
            let ss: f64 = s.iter().map(|v| v * v).sum();
            let sy: f64 = s.iter().zip(y).map(|(a, b)| a * (b - intercept)).sum();
            sy / ss
        })
        .collect();

    Ok(PcrModel {
        feature_names: feature_names.to_vec(),
        means,
        scales,
        components,
        eigenvalues,
        k,
        coefficients,
        intercept,
        warnings,
    })
}

fn standardize(x: &Matrix, means: &[f64], scales: &[f64]) -> Matrix {
    let mut z = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            z[(i, j)] = (x[(i, j)] - means[j]) / scales[j];
        }
    }
    z
}

impl PcrModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, PcrError> {
        let p = self.feature_names.len();
        if x.cols() != p {
            return Err(PcrError::Dimension {
                expected: p,
                got: x.cols(),
            });
        }
        let scores = standardize(x, &self.means, &self.scales).matmul(&self.components);
        Ok((0..x.rows())
            .map(|i| {
                self.intercept
                    + scores
                        .row(i)
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(s, c)| s * c)
                        .sum::<f64>()
            })
            .collect())
    }

    /// Fraction of standardized variance carried by the retained components.
    pub fn explained_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..self.k].iter().sum::<f64>() / total
    }

    /// Mean squared residual of projecting standardized `x` onto the
    /// retained components.
    pub fn reconstruction_error(&self, x: &Matrix) -> Result<f64, PcrError> {
        if x.cols() != self.feature_names.len() {
            return Err(PcrError::Dimension {
                expected: self.feature_names.len(),
                got: x.cols(),
            });
        }
        let z = standardize(x, &self.means, &self.scales);
        let back = z.matmul(&self.components).matmul(&self.components.transpose());
        let mut err = 0.0;
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                err += (z[(i, j)] - back[(i, j)]).powi(2);
            }
        }
        Ok(err / z.rows() as f64)
    }
}

pub fn pcr_eval(model: &PcrModel, x: &Matrix, y: &[f64]) -> Result<f64, PcrError> {
    let pred = model.predict(x)?;
    if pred.len() != y.len() {
        return Err(PcrError::Length(pred.len(), y.len()));
    }
    Ok(pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRow {
    pub features: Vec<String>,
    pub k: usize,
    pub explained_variance: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub warnings: Vec<String>,
}

/// Fit one model per feature subset on the train part of a seeded split and
/// score it on the test part. The validation part is not used.
pub fn subset_experiment(
    records: &[MaterialRecord],
    subsets: &[Vec<String>],
    target: &str,
    split: &SplitSpec,
    policy: KPolicy,
    variant: ScoreVariant,
) -> Result<Vec<SubsetRow>, PcrError> {
    let parts = split_indices(records.len(), split)?;
    let pick = |ix: &[usize]| -> Vec<MaterialRecord> { ix.iter().map(|&i| records[i].clone()).collect() };
    let train = pick(&parts.train);
    let test = pick(&parts.test);
    let target_of =
        |rs: &[MaterialRecord]| -> Result<Vec<f64>, PcrError> { Ok(feature_matrix(rs, &[target], variant)?.remove(0)) };
    let y_train = target_of(&train)?;
    let y_test = target_of(&test)?;
    subsets
        .par_iter()
        .map(|subset| {
            let names: Vec<&str> = subset.iter().map(String::as_str).collect();
            let x_train = Matrix::from_columns(&feature_matrix(&train, &names, variant)?);
            let x_test = Matrix::from_columns(&feature_matrix(&test, &names, variant)?);
            let model = pcr_fit(&x_train, &y_train, subset, policy)?;
            Ok(SubsetRow {
                features: subset.clone(),
                k: model.k,
                explained_variance: model.explained_variance(),
                train_mse: pcr_eval(&model, &x_train, &y_train)?,
                test_mse: pcr_eval(&model, &x_test, &y_test)?,
                warnings: model.warnings.clone(),
            })
        })
        .collect()
}

/// One indicator column per feature in `universe` (1 = used), then k,
/// explained variance and both errors.
pub fn write_subset_csv<W: Write>(rows: &[SubsetRow], universe: &[String], out: W) -> Result<(), PcrError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = universe.to_vec();
    header.extend(["k", "explained_variance", "train_mse", "test_mse"].map(String::from));
    w.write_record(&header).map_err(DatasetError::from)?;
    for row in rows {
        let mut rec: Vec<String> = universe
            .iter()
            .map(|f| if row.features.contains(f) { "1" } else { "0" }.to_string())
            .collect();
        rec.push(row.k.to_string());
        rec.push(format!("{:.6}", row.explained_variance));
        rec.push(format!("{:.6e}", row.train_mse));
        rec.push(format!("{:.6e}", row.test_mse));
        w.write_record(&rec).map_err(DatasetError::from)?;
    }
    w.flush()?;
    Ok(())
}
