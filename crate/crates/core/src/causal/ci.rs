//! Conditional-independence tests over categorical and numeric tables.

use std::collections::HashMap;

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use super::CausalError;
use crate::dataset::{discretize, BinStrategy};
use crate::linalg::{correlation_matrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    ChiSquare,
    FisherZ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom; chi-square only.
    pub dof: Option<usize>,
    pub independent: bool,
    pub test: TestKind,
    pub alpha: f64,
    /// No usable evidence (all strata degenerate or singular correlations).
    /// Reported as independent.
    pub untestable: bool,
}

impl CiTestResult {
    fn decided(test: TestKind, statistic: f64, p_value: f64, dof: Option<usize>, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        CiTestResult {
            statistic,
            p_value,
            dof,
            independent: p_value > alpha,
            test,
            alpha,
            untestable: false,
        }
    }

    fn untestable(test: TestKind, alpha: f64) -> Self {
        CiTestResult {
            statistic: 0.0,
            p_value: 1.0,
            dof: (test == TestKind::ChiSquare).then_some(0),
            independent: true,
            test,
            alpha,
            untestable: true,
        }
    }
}

/// Something that can answer "is x independent of y given z?".
pub trait CiTest: Sync {
    fn names(&self) -> &[String];
    fn alpha(&self) -> f64;
    fn kind(&self) -> TestKind;
    fn test(&self, x: usize, y: usize, z: &[usize]) -> CiTestResult;

    fn n_vars(&self) -> usize {
        self.names().len()
    }
}

fn check_alpha(alpha: f64) -> Result<(), CausalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CausalError::Alpha(alpha))
    }
}

/// Columns of category codes.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTable {
    names: Vec<String>,
    columns: Vec<Vec<u32>>,
}

impl CategoricalTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<u32>>) -> Result<Self, CausalError> {
        if names.len() != columns.len() {
            return Err(CausalError::Shape("one name per column".into()));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(CausalError::Shape("columns differ in length".into()));
        }
        Ok(CategoricalTable { names, columns })
    }

    /// Discretize numeric columns with a shared bin count and strategy.
    pub fn discretized(
        names: Vec<String>,
        columns: &[Vec<f64>],
        bins: usize,
        strategy: BinStrategy,
    ) -> Result<Self, CausalError> {
        let mut coded = Vec::with_capacity(columns.len());
        for (name, col) in names.iter().zip(columns) {
            let d = discretize(col, bins, strategy).map_err(|e| CausalError::Shape(format!("column {name}: {e}")))?;
            coded.push(d.bins.into_iter().map(|b| b as u32).collect());
        }
        CategoricalTable::new(names, coded)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, i: usize) -> &[u32] {
        &self.columns[i]
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Pearson chi-square test of x ⊥ y | z, summed over the strata of z.
pub fn chi_square_ci(table: &CategoricalTable, x: usize, y: usize, z: &[usize], alpha: f64) -> CiTestResult {
    let n = table.rows();
    // Strata and category indices are numbered by first appearance so the
    // summation order is fixed by the data.
    let mut strata: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut stratum_of = Vec::with_capacity(n);
    for row in 0..n {
        let key: Vec<u32> = z.iter().map(|&c| table.columns[c][row]).collect();
        let next = strata.len();
        stratum_of.push(*strata.entry(key).or_insert(next));
    }
    let xs = &table.columns[x];
    let ys = &table.columns[y];
    let x_levels = xs.iter().max().map_or(0, |m| *m as usize + 1);
    let y_levels = ys.iter().max().map_or(0, |m| *m as usize + 1);
    let mut counts = vec![vec![0.0f64; x_levels * y_levels]; strata.len()];
    for row in 0..n {
        counts[stratum_of[row]][xs[row] as usize * y_levels + ys[row] as usize] += 1.0;
    }

    let mut statistic = 0.0;
    let mut dof = 0usize;
    for cell in &counts {
        let row_sums: Vec<f64> = (0..x_levels)
            .map(|i| cell[i * y_levels..(i + 1) * y_levels].iter().sum())
            .collect();
        let col_sums: Vec<f64> = (0..y_levels)
            .map(|j| (0..x_levels).map(|i| cell[i * y_levels + j]).sum())
            .collect();
        let rows_seen = row_sums.iter().filter(|&&s| s > 0.0).count();
        let cols_seen = col_sums.iter().filter(|&&s| s > 0.0).count();
        if rows_seen < 2 || cols_seen < 2 {
            continue;
        }
        let total: f64 = row_sums.iter().sum();
        for i in 0..x_levels {
            if row_sums[i] == 0.0 {
                continue;
            }
            for j in 0..y_levels {
                if col_sums[j] == 0.0 {
                    continue;
                }
                let expected = row_sums[i] * col_sums[j] / total;
                let d = cell[i * y_levels + j] - expected;
                statistic += d * d / expected;
            }
        }
        dof += (rows_seen - 1) * (cols_seen - 1);
    }
    if dof == 0 {
        log::debug!("chi-square {x} vs {y} | {z:?}: untestable");
        return CiTestResult::untestable(TestKind::ChiSquare, alpha);
    }
    let p = if statistic > 0.0 {
        gamma_ur(dof as f64 / 2.0, statistic / 2.0)
    } else {
        1.0
    };
    CiTestResult::decided(TestKind::ChiSquare, statistic, p, Some(dof), alpha)
}

#[derive(Debug, Clone)]
pub struct ChiSquareTest {
    table: CategoricalTable,
    alpha: f64,
}

impl ChiSquareTest {
    pub fn new(table: CategoricalTable, alpha: f64) -> Result<Self, CausalError> {
        check_alpha(alpha)?;
        Ok(ChiSquareTest { table, alpha })
    }
}

impl CiTest for ChiSquareTest {
    fn names(&self) -> &[String] {
        self.table.names()
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn kind(&self) -> TestKind {
        TestKind::ChiSquare
    }
    fn test(&self, x: usize, y: usize, z: &[usize]) -> CiTestResult {
        chi_square_ci(&self.table, x, y, z, self.alpha)
    }
}

/// Numeric columns plus their correlation matrix.
#[derive(Debug, Clone)]
pub struct NumericTable {
    names: Vec<String>,
    rows: usize,
    corr: Matrix,
}

impl NumericTable {
    pub fn new(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self, CausalError> {
        if names.len() != columns.len() {
            return Err(CausalError::Shape("one name per column".into()));
        }
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(CausalError::Shape("columns differ in length".into()));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CausalError::Shape("non-finite value".into()));
        }
        Ok(NumericTable {
            names,
            rows,
            corr: correlation_matrix(columns),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn correlation(&self) -> &Matrix {
        &self.corr
    }
}

/// Partial correlation of x and y given z from a correlation matrix.
/// `None` when the conditioning submatrix is singular.
pub fn partial_correlation(corr: &Matrix, x: usize, y: usize, z: &[usize]) -> Option<f64> {
    if z.is_empty() {
        let r = corr[(x, y)];
        return r.is_finite().then_some(r.clamp(-1.0, 1.0));
    }
    let mut idx = vec![x, y];
    idx.extend_from_slice(z);
    let precision = corr.submatrix(&idx).inverse()?;
    let denom = (precision[(0, 0)] * precision[(1, 1)]).sqrt();
    if !(denom.is_finite() && denom > 0.0) {
        return None;
    }
    Some((-precision[(0, 1)] / denom).clamp(-1.0, 1.0))
}

/// Fisher-Z test: sqrt(n - |z| - 3) * atanh(r), two-sided normal p-value.
pub fn fisher_z_ci(table: &NumericTable, x: usize, y: usize, z: &[usize], alpha: f64) -> CiTestResult {
    let dof = table.rows as f64 - z.len() as f64 - 3.0;
    // Constant columns leave NaN correlations behind.
    let mut idx = vec![x, y];
    idx.extend_from_slice(z);
    let degenerate = idx.iter().any(|&i| idx.iter().any(|&j| table.corr[(i, j)].is_nan()));
    if degenerate || dof <= 0.0 {
        return CiTestResult::untestable(TestKind::FisherZ, alpha);
    }
    let Some(r) = partial_correlation(&table.corr, x, y, z) else {
        log::debug!("fisher-z {x} vs {y} | {z:?}: singular correlation submatrix");
        return CiTestResult::untestable(TestKind::FisherZ, alpha);
    };
    let statistic = dof.sqrt() * r.atanh();
    let p = if statistic.is_infinite() {
        0.0
    } else {
        erfc(statistic.abs() / std::f64::consts::SQRT_2)
    };
    CiTestResult::decided(TestKind::FisherZ, statistic, p, None, alpha)
}

#[derive(Debug, Clone)]
pub struct FisherZTest {
    table: NumericTable,
    alpha: f64,
}

impl FisherZTest {
    pub fn new(table: NumericTable, alpha: f64) -> Result<Self, CausalError> {
        check_alpha(alpha)?;
        Ok(FisherZTest { table, alpha })
    }
}

impl CiTest for FisherZTest {
    fn names(&self) -> &[String] {
        self.table.names()
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn kind(&self) -> TestKind {
        TestKind::FisherZ
    }
    fn test(&self, x: usize, y: usize, z: &[usize]) -> CiTestResult {
        fisher_z_ci(&self.table, x, y, z, self.alpha)
    }
}
