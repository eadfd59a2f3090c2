//! Hydrogen storage score, formation-energy weighting and error statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{Composition, Element};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("formation energy is NaN")]
    NanEnergy,
    #[error("hydrogen weight fraction {0} outside [0, 1]")]
    WeightFraction(f64),
    #[error("energy breakdown has no components")]
    NoComponents,
    #[error("component {0} has non-positive moles")]
    NonPositiveMoles(String),
    #[error("error statistics need at least one pair")]
    EmptyPairs,
    #[error("unknown score variant `{0}`")]
    UnknownVariant(String),
}

/// Which E_factor window to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    /// Window [-1, 0] eV, half-width 0.5.
    Original,
    /// Window [-1.2, 0.2] eV, half-width 0.7.
    #[default]
    Modified,
}

impl ScoreVariant {
    pub const CENTER: f64 = -0.5;

    pub fn half_width(self) -> f64 {
        match self {
            ScoreVariant::Original => 0.5,
            ScoreVariant::Modified => 0.7,
        }
    }

    pub fn window(self) -> (f64, f64) {
        match self {
            ScoreVariant::Original => (-1.0, 0.0),
            ScoreVariant::Modified => (-1.2, 0.2),
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreVariant::Original => "original",
            ScoreVariant::Modified => "modified",
        })
    }
}

impl FromStr for ScoreVariant {
    type Err = ScoringError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(ScoreVariant::Original),
            "modified" => Ok(ScoreVariant::Modified),
            _ => Err(ScoringError::UnknownVariant(s.to_string())),
        }
    }
}

/// Elliptical weight sqrt(1 - ((|e + 0.5|) / w)^2) inside the window, zero outside.
pub fn e_factor(e_form: f64, variant: ScoreVariant) -> Result<f64, ScoringError> {
    if e_form.is_nan() {
        return Err(ScoringError::NanEnergy);
    }
    let (lo, hi) = variant.window();
    if !(lo..=hi).contains(&e_form) {
        return Ok(0.0);
    }
    let r = (e_form - ScoreVariant::CENTER).abs() / variant.half_width();
    // Radicand clamped so the window edges give exactly 0 instead of NaN.
    Ok((1.0 - r * r).max(0.0).sqrt())
}

pub fn e_factor_original(e_form: f64) -> Result<f64, ScoringError> {
    e_factor(e_form, ScoreVariant::Original)
}

pub fn e_factor_modified(e_form: f64) -> Result<f64, ScoringError> {
    e_factor(e_form, ScoreVariant::Modified)
}

pub fn h_storage_score(e_form: f64, w_h2: f64, variant: ScoreVariant) -> Result<f64, ScoringError> {
    if !(0.0..=1.0).contains(&w_h2) {
        return Err(ScoringError::WeightFraction(w_h2));
    }
    Ok(e_factor(e_form, variant)? * w_h2)
}

/// Round to three decimals, the precision used in report tables.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMaterial {
    pub composition: Composition,
    pub e_form: f64,
    pub w_h2: f64,
    pub e_factor: f64,
    pub score: f64,
    pub variant: ScoreVariant,
}

impl ScoredMaterial {
    pub fn new(composition: Composition, e_form: f64, variant: ScoreVariant) -> Result<Self, ScoringError> {
        let w_h2 = composition.hydrogen_weight_fraction();
        let e_factor = e_factor(e_form, variant)?;
        Ok(ScoredMaterial {
            composition,
            e_form,
            w_h2,
            e_factor,
            score: e_factor * w_h2,
            variant,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyComponent {
    pub element: Element,
    pub moles: f64,
    pub reference_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub e_total: f64,
    pub components: Vec<EnergyComponent>,
}

/// E_total minus the sum of n_i E_i over the constituent reference states.
pub fn formation_energy(b: &EnergyBreakdown) -> Result<f64, ScoringError> {
    if b.components.is_empty() {
        return Err(ScoringError::NoComponents);
    }
    let mut reference = 0.0;
    for c in &b.components {
        if c.moles.is_nan() || c.moles <= 0.0 {
            return Err(ScoringError::NonPositiveMoles(c.element.to_string()));
        }
        reference += c.moles * c.reference_energy;
    }
    Ok(b.e_total - reference)
}

pub fn squared_error(pred: f64, reference: f64) -> f64 {
    (pred - reference).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mse: f64,
    pub mae: f64,
    pub n: usize,
}

pub fn error_stats(pairs: &[(f64, f64)]) -> Result<ErrorStats, ScoringError> {
    if pairs.is_empty() {
        return Err(ScoringError::EmptyPairs);
    }
    let n = pairs.len();
    let (se, ae) = pairs.iter().fold((0.0, 0.0), |(se, ae), &(p, r)| {
        (se + squared_error(p, r), ae + (p - r).abs())
    });
    Ok(ErrorStats {
        mse: se / n as f64,
        mae: ae / n as f64,
        n,
    })
}

/// Sampled E_factor curves for both variants over [lo, hi].
pub fn e_factor_curve(lo: f64, hi: f64, points: usize) -> Vec<(f64, f64, f64)> {
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let e = lo + (hi - lo) * i as f64 / steps as f64;
            (
                e,
                e_factor_original(e).unwrap_or(0.0),
                e_factor_modified(e).unwrap_or(0.0),
            )
        })
        .collect()
}
