//! Material records: loading, training-set criteria, splits and discretization.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{parse_formula, ChemError, Composition, Element};
use crate::cif::{self, CifError, Structure};
use crate::scoring::{self, ScoreVariant};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_SITES: usize = 20;
pub const MAX_HULL_ENERGY: f64 = 0.08;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("duplicate record id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("invalid split ratios: {0}")]
    Split(String),
    #[error("need at least {need} records, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("discretization: {0}")]
    Discretize(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("record `{id}` has no value for `{feature}`")]
    MissingValue { id: String, feature: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRecord {
    pub id: String,
    pub formula: Composition,
    pub structure: Option<Structure>,
    /// Path of the CIF file backing `structure`, relative to the dataset file.
    pub cif_path: Option<String>,
    pub e_form: f64,
    pub energy_above_hull: Option<f64>,
    pub density: Option<f64>,
    pub band_gap: Option<f64>,
    pub w_h2: f64,
    pub score: Option<f64>,
    pub f_character: Option<f64>,
    pub extra: BTreeMap<String, f64>,
}

impl MaterialRecord {
    pub fn new(id: impl Into<String>, formula: Composition, e_form: f64) -> Self {
        let w_h2 = formula.hydrogen_weight_fraction();
        MaterialRecord {
            id: id.into(),
            formula,
            structure: None,
            cif_path: None,
            e_form,
            energy_above_hull: None,
            density: None,
            band_gap: None,
            w_h2,
            score: None,
            f_character: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if !self.e_form.is_finite() {
            return Err(format!("non-finite e_form {}", self.e_form));
        }
        if let Some(h) = self.energy_above_hull {
            if h.is_nan() || h < 0.0 {
                return Err(format!("negative energy_above_hull {h}"));
            }
        }
        let expect = self.formula.hydrogen_weight_fraction();
        if (self.w_h2 - expect).abs() > 1e-6 {
            return Err(format!("w_h2 {} inconsistent with formula ({expect})", self.w_h2));
        }
        if let Some(s) = &self.structure {
            s.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn score_or_compute(&self, variant: ScoreVariant) -> f64 {
        self.score
            .unwrap_or_else(|| scoring::h_storage_score(self.e_form, self.w_h2, variant).unwrap_or(0.0))
    }

    /// Named numeric feature. Unknown names fall through to `extra`.
    pub fn feature(&self, name: &str, variant: ScoreVariant) -> Result<Option<f64>, DatasetError> {
        Ok(match name {
            "e_form" => Some(self.e_form),
            "energy_above_hull" => self.energy_above_hull,
            "density" => self.density,
            "band_gap" => self.band_gap,
            "w_h2" => Some(self.w_h2),
            "f_character" => self.f_character,
            "score" => Some(self.score_or_compute(variant)),
            "e_factor" => Some(scoring::e_factor(self.e_form, variant).unwrap_or(0.0)),
            "n_sites" => self.structure.as_ref().map(|s| s.site_count() as f64),
            "n_elements" => Some(self.formula.num_elements() as f64),
            other => match self.extra.get(other) {
                Some(v) => Some(*v),
                None => return Err(DatasetError::UnknownFeature(other.to_string())),
            },
        })
    }
}

/// Extract named feature columns; every record must carry every feature.
pub fn feature_matrix(
    records: &[MaterialRecord],
    names: &[&str],
    variant: ScoreVariant,
) -> Result<Vec<Vec<f64>>, DatasetError> {
    names
        .iter()
        .map(|name| {
            records
                .iter()
                .map(|r| {
                    r.feature(name, variant)?.ok_or_else(|| DatasetError::MissingValue {
                        id: r.id.clone(),
                        feature: name.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    JsonLines,
}

impl RecordFormat {
    pub fn from_path(path: &Path) -> RecordFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => RecordFormat::JsonLines,
            _ => RecordFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Skip invalid rows and report them.
    #[default]
    Lenient,
    /// Fail on the first invalid row.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub records: Vec<MaterialRecord>,
    pub skipped: Vec<Diagnostic>,
}

const CSV_COLUMNS: [&str; 9] = [
    "id",
    "formula",
    "e_form",
    "energy_above_hull",
    "density",
    "band_gap",
    "f_character",
    "cif_path",
    "score",
];

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    schema_version: u32,
    id: String,
    formula: String,
    e_form: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy_above_hull: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f_character: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cif_path: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, f64>,
}

struct RawRow {
    id: String,
    formula: String,
    e_form: f64,
    energy_above_hull: Option<f64>,
    density: Option<f64>,
    band_gap: Option<f64>,
    f_character: Option<f64>,
    score: Option<f64>,
    cif_path: Option<String>,
    extra: BTreeMap<String, f64>,
}

fn opt_number(column: &str, raw: &str) -> Result<Option<f64>, String> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("column {column}: `{t}` is not a number"))
}

fn build_record(raw: RawRow, base_dir: &Path) -> Result<MaterialRecord, String> {
    let formula: Composition = parse_formula(raw.formula.trim()).map_err(|e| e.to_string())?;
    let mut r = MaterialRecord::new(raw.id.trim(), formula, raw.e_form);
    r.energy_above_hull = raw.energy_above_hull;
    r.density = raw.density;
    r.band_gap = raw.band_gap;
    r.f_character = raw.f_character;
    r.score = raw.score;
    r.extra = raw.extra;
    if let Some(rel) = raw.cif_path.filter(|p| !p.trim().is_empty()) {
        let full = base_dir.join(rel.trim());
        let text = fs::read_to_string(&full).map_err(|e| format!("{}: {e}", full.display()))?;
        let s = cif::parse_cif(&text).map_err(|e| format!("{}: {e}", full.display()))?;
        r.structure = Some(s);
        r.cif_path = Some(rel.trim().to_string());
    }
    r.validate()?;
    Ok(r)
}

fn push_row(
    report: &mut LoadReport,
    seen: &mut HashSet<String>,
    line: usize,
    row: Result<MaterialRecord, String>,
    mode: LoadMode,
) -> Result<(), DatasetError> {
    match row {
        Ok(r) => {
            if !seen.insert(r.id.clone()) {
                return Err(DatasetError::DuplicateId { id: r.id, line });
            }
            report.records.push(r);
            Ok(())
        }
        Err(message) => match mode {
            LoadMode::Strict => Err(DatasetError::Row { line, message }),
            LoadMode::Lenient => {
                log::warn!("line {line}: skipped: {message}");
                report.skipped.push(Diagnostic { line, message });
                Ok(())
            }
        },
    }
}

/// Load records from CSV or JSON-lines. CIF paths resolve relative to the file.
pub fn load_records(path: &Path, format: RecordFormat, mode: LoadMode) -> Result<LoadReport, DatasetError> {
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let file = fs::File::open(path).map_err(io_err(path))?;
    match format {
        RecordFormat::Csv => load_csv(file, &base_dir, mode),
        RecordFormat::JsonLines => load_jsonl(file, &base_dir, mode, path),
    }
}

fn load_csv(reader: impl std::io::Read, base_dir: &Path, mode: LoadMode) -> Result<LoadReport, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, formula_col, e_col) = match (col("id"), col("formula"), col("e_form")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(DatasetError::Schema(
                "header must contain id, formula and e_form".into(),
            ))
        }
    };
    let optional: BTreeMap<&str, Option<usize>> = CSV_COLUMNS[3..].iter().map(|&c| (c, col(c))).collect();
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !CSV_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let get = |c: usize| row.get(c).unwrap_or("");
        let parsed = (|| -> Result<MaterialRecord, String> {
            let num = |name: &str| -> Result<Option<f64>, String> {
                match optional[name] {
                    Some(c) => opt_number(name, get(c)),
                    None => Ok(None),
                }
            };
            let e_form = opt_number("e_form", get(e_col))?.ok_or("missing e_form")?;
            let mut extra = BTreeMap::new();
            for (c, name) in &extra_cols {
                if let Some(v) = opt_number(name, get(*c))? {
                    extra.insert(name.clone(), v);
                }
            }
            let raw = RawRow {
                id: get(id_col).to_string(),
                formula: get(formula_col).to_string(),
                e_form,
                energy_above_hull: num("energy_above_hull")?,
                density: num("density")?,
                band_gap: num("band_gap")?,
                f_character: num("f_character")?,
                score: num("score")?,
                cif_path: optional["cif_path"].map(|c| get(c).to_string()),
                extra,
            };
            build_record(raw, base_dir)
        })();
        push_row(&mut report, &mut seen, line, parsed, mode)?;
    }
    Ok(report)
}

fn load_jsonl(file: fs::File, base_dir: &Path, mode: LoadMode, path: &Path) -> Result<LoadReport, DatasetError> {
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Row {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::Schema(format!(
                "line {lineno}: schema_version {} (expected {SCHEMA_VERSION})",
                rec.schema_version
            )));
        }
        let raw = RawRow {
            id: rec.id,
            formula: rec.formula,
            e_form: rec.e_form,
            energy_above_hull: rec.energy_above_hull,
            density: rec.density,
            band_gap: rec.band_gap,
            f_character: rec.f_character,
            score: rec.score,
            cif_path: rec.cif_path,
            extra: rec.extra,
        };
        push_row(&mut report, &mut seen, lineno, build_record(raw, base_dir), mode)?;
    }
    Ok(report)
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write records as JSON-lines. Structures go to `cifs/<id>.cif` beside the file.
pub fn write_records_jsonl(records: &[MaterialRecord], path: &Path) -> Result<(), DatasetError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = String::new();
    for r in records {
        let cif_path = match &r.structure {
            Some(s) => {
                let rel = format!("cifs/{}.cif", file_stem_for(&r.id));
                let full = dir.join(&rel);
                fs::create_dir_all(full.parent().unwrap()).map_err(io_err(&full))?;
                let text = cif::write_cif(s).map_err(|e| DatasetError::Schema(e.to_string()))?;
                fs::write(&full, text).map_err(io_err(&full))?;
                Some(rel)
            }
            None => None,
        };
        let rec = JsonRecord {
            schema_version: SCHEMA_VERSION,
            id: r.id.clone(),
            formula: r.formula.to_string(),
            e_form: r.e_form,
            energy_above_hull: r.energy_above_hull,
            density: r.density,
            band_gap: r.band_gap,
            f_character: r.f_character,
            score: r.score,
            cif_path,
            extra: r.extra.clone(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Write records as CSV with structures in `cifs/` beside the file.
pub fn write_records_csv(records: &[MaterialRecord], path: &Path) -> Result<(), DatasetError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let extra_names: Vec<String> = records
        .iter()
        .flat_map(|r| r.extra.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(extra_names.iter().cloned());
    w.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let cif_path = match &r.structure {
            Some(s) => {
                let rel = format!("cifs/{}.cif", file_stem_for(&r.id));
                let full = dir.join(&rel);
                fs::create_dir_all(full.parent().unwrap()).map_err(io_err(&full))?;
                let text = cif::write_cif(s).map_err(|e| DatasetError::Schema(e.to_string()))?;
                fs::write(&full, text).map_err(io_err(&full))?;
                rel
            }
            None => String::new(),
        };
        let mut row = vec![
            r.id.clone(),
            r.formula.to_string(),
            r.e_form.to_string(),
            fmt(r.energy_above_hull),
            fmt(r.density),
            fmt(r.band_gap),
            fmt(r.f_character),
            cif_path,
            fmt(r.score),
        ];
        row.extend(extra_names.iter().map(|n| fmt(r.extra.get(n).copied())));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))
}

/// Why a record was excluded from the training set (first violated rule).
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    NoHydrogen,
    NoStructure,
    TooManySites(usize),
    MissingHullEnergy,
    HullOutOfRange(f64),
    PositiveFormationEnergy(f64),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NoHydrogen => f.write_str("no hydrogen"),
            Rejection::NoStructure => f.write_str("no structure"),
            Rejection::TooManySites(n) => write!(f, "more than {MAX_SITES} sites ({n})"),
            Rejection::MissingHullEnergy => f.write_str("no energy above hull"),
            Rejection::HullOutOfRange(h) => write!(f, "energy above hull outside [0, {MAX_HULL_ENERGY}] ({h})"),
            Rejection::PositiveFormationEnergy(_) => f.write_str("formation energy > 0"),
        }
    }
}

pub fn check_training_criteria(r: &MaterialRecord) -> Result<(), Rejection> {
    if !r.formula.contains(Element::H) {
        return Err(Rejection::NoHydrogen);
    }
    let s = r.structure.as_ref().ok_or(Rejection::NoStructure)?;
    if s.site_count() > MAX_SITES {
        return Err(Rejection::TooManySites(s.site_count()));
    }
    let hull = r.energy_above_hull.ok_or(Rejection::MissingHullEnergy)?;
    if !(0.0..=MAX_HULL_ENERGY).contains(&hull) {
        return Err(Rejection::HullOutOfRange(hull));
    }
    if r.e_form > 0.0 {
        return Err(Rejection::PositiveFormationEnergy(r.e_form));
    }
    Ok(())
}

pub type Criteria = (Vec<MaterialRecord>, Vec<(MaterialRecord, Rejection)>);

pub fn apply_training_criteria(records: &[MaterialRecord]) -> Criteria {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for r in records {
        match check_training_criteria(r) {
            Ok(()) => kept.push(r.clone()),
            Err(why) => rejected.push((r.clone(), why)),
        }
    }
    (kept, rejected)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, DatasetError> {
        let s = SplitSpec { train, val, test, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(DatasetError::Split(format!("fractions must be positive: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Split(format!("fractions sum to {sum}")));
        }
        Ok(())
    }

    /// Sizes by floor allocation of val and test; the remainder goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let part = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let val = part(self.val);
        let test = part(self.test);
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle of `0..n`, cut into train/val/test index sets.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Partition<usize>, DatasetError> {
    spec.validate()?;
    if n < 3 {
        return Err(DatasetError::TooFew { need: 3, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let (tr, va, _) = spec.sizes(n);
    let test = idx.split_off(tr + va);
    let val = idx.split_off(tr);
    Ok(Partition { train: idx, val, test })
}

pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Partition<T>, DatasetError> {
    let p = split_indices(items.len(), spec)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    Ok(Partition {
        train: pick(&p.train),
        val: pick(&p.val),
        test: pick(&p.test),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinStrategy {
    EqualWidth,
    #[default]
    EqualFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub bins: Vec<usize>,
    /// Lower edges of bins 1..; a value v lands above every edge e with v >= e.
    pub edges: Vec<f64>,
}

pub fn discretize(values: &[f64], bins: usize, strategy: BinStrategy) -> Result<Discretized, DatasetError> {
    if bins < 2 {
        return Err(DatasetError::Discretize(format!("need at least 2 bins, got {bins}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::Discretize("non-finite value".into()));
    }
    if values.is_empty() {
        return Ok(Discretized {
            bins: vec![],
            edges: vec![],
        });
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match strategy {
        BinStrategy::EqualWidth => {
            if max == min {
                return Ok(Discretized {
                    bins: vec![0; values.len()],
                    edges: vec![],
                });
            }
            let width = (max - min) / bins as f64;
            let edges: Vec<f64> = (1..bins).map(|k| min + width * k as f64).collect();
            let assign = values
                .iter()
                .map(|v| edges.iter().take_while(|e| v >= e).count())
                .collect();
            Ok(Discretized { bins: assign, edges })
        }
        BinStrategy::EqualFrequency => {
            if max == min {
                return Err(DatasetError::Discretize(
                    "constant column cannot be split by frequency".into(),
                ));
            }
            let n = values.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let mut assign = vec![0; n];
            let mut edges = Vec::new();
            let mut rank = 0;
            let mut last_bin = 0;
            while rank < n {
                // Ties share the bin of their first rank.
                let v = values[order[rank]];
                let bin = rank * bins / n;
                if bin != last_bin {
                    edges.push(v);
                    last_bin = bin;
                }
                while rank < n && values[order[rank]] == v {
                    assign[order[rank]] = bin;
                    rank += 1;
                }
            }
            Ok(Discretized { bins: assign, edges })
        }
    }
}

impl From<ChemError> for DatasetError {
    fn from(e: ChemError) -> Self {
        DatasetError::Schema(e.to_string())
    }
}

impl From<CifError> for DatasetError {
    fn from(e: CifError) -> Self {
        DatasetError::Schema(e.to_string())
    }
}

/// Write a line-oriented diagnostic summary, used by the ingest report.
pub fn write_rejections(rejected: &[(MaterialRecord, Rejection)], path: &Path) -> Result<(), DatasetError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    writeln!(f, "id,formula,reason").map_err(io_err(path))?;
    for (r, why) in rejected {
        writeln!(f, "{},{},{}", r.id, r.formula, why).map_err(io_err(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cif::{Lattice, Site};
    use proptest::prelude::*;

    fn structure(n: usize) -> Structure {
        Structure {
            lattice: Lattice::cubic(4.0),
            sites: (0..n)
                .map(|i| Site::new(Element::H, [i as f64 / (n + 1) as f64, 0.0, 0.0]))
                .collect(),
            source_id: None,
        }
    }

    fn tih2() -> MaterialRecord {
        let mut r = MaterialRecord::new("mp-1", parse_formula("TiH2").unwrap(), -0.45);
        r.energy_above_hull = Some(0.01);
        r.structure = Some(structure(3));
        r
    }

    #[test]
    fn criteria_labels() {
        assert_eq!(check_training_criteria(&tih2()), Ok(()));
        let mut r = tih2();
        r.formula = parse_formula("TiO2").unwrap();
        r.w_h2 = 0.0;
        assert_eq!(check_training_criteria(&r), Err(Rejection::NoHydrogen));
        assert_eq!(Rejection::NoHydrogen.to_string(), "no hydrogen");
        let mut r = tih2();
        r.e_form = 0.05;
        let why = check_training_criteria(&r).unwrap_err();
        assert_eq!(why.to_string(), "formation energy > 0");
        let mut r = tih2();
        r.e_form = 0.0;
        assert_eq!(check_training_criteria(&r), Ok(()));
        let mut r = tih2();
        r.structure = None;
        assert_eq!(check_training_criteria(&r), Err(Rejection::NoStructure));
        let mut r = tih2();
        r.structure = Some(structure(21));
        assert_eq!(check_training_criteria(&r), Err(Rejection::TooManySites(21)));
        r.structure = Some(structure(20));
        assert_eq!(check_training_criteria(&r), Ok(()));
        let mut r = tih2();
        r.energy_above_hull = Some(0.081);
        assert!(matches!(check_training_criteria(&r), Err(Rejection::HullOutOfRange(_))));
        r.energy_above_hull = Some(0.08);
        assert_eq!(check_training_criteria(&r), Ok(()));
    }

    #[test]
    fn criteria_fixpoint() {
        let mut recs = vec![tih2()];
        let mut bad = tih2();
        bad.id = "mp-2".into();
        bad.e_form = 0.3;
        recs.push(bad);
        let (kept, rejected) = apply_training_criteria(&recs);
        assert_eq!((kept.len(), rejected.len()), (1, 1));
        let (again, none) = apply_training_criteria(&kept);
        assert_eq!(again, kept);
        assert!(none.is_empty());
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::standard(7);
        assert_eq!(spec.sizes(450), (270, 90, 90));
        assert_eq!(spec.sizes(5), (3, 1, 1));
        let a = split_indices(450, &spec).unwrap();
        let b = split_indices(450, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (270, 90, 90));
        assert!(split_indices(2, &spec).is_err());
        assert!(SplitSpec::new(0.5, 0.5, 0.0, 1).is_err());
        assert!(SplitSpec::new(0.5, 0.3, 0.3, 1).is_err());
    }

    #[test]
    fn equal_width_bins() {
        let d = discretize(&[0.0, 1.0, 2.0, 3.0], 2, BinStrategy::EqualWidth).unwrap();
        assert_eq!(d.bins, [0, 0, 1, 1]);
        let d = discretize(&[1.0, 1.0, 1.0, 10.0], 2, BinStrategy::EqualWidth).unwrap();
        assert_eq!(d.bins, [0, 0, 0, 1]);
        assert_eq!(d.edges, [5.5]);
    }

    #[test]
    fn equal_frequency_bins() {
        assert!(discretize(&[2.0; 5], 3, BinStrategy::EqualFrequency).is_err());
        let d = discretize(&[5.0, 1.0, 3.0, 2.0, 6.0, 4.0], 3, BinStrategy::EqualFrequency).unwrap();
        assert_eq!(d.bins, [2, 0, 1, 0, 2, 1]);
        assert_eq!(d.edges, [3.0, 5.0]);
        assert!(discretize(&[1.0, 2.0], 1, BinStrategy::EqualWidth).is_err());
    }

    const CSV_FIXTURE: &str = "\
id,formula,e_form,energy_above_hull,density,band_gap,f_character,cif_path,temperature
mp-1,TiH2,-0.45,0.01,3.9,0.0,0.0,,300
mp-2,LiBH4,-0.3,0.0,0.67,6.8,0.0,,
mp-3,MgH2,-0.25,0.02,1.45,3.6,,,310
";

    #[test]
    fn loads_csv_and_extras() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.csv");
        fs::write(&p, CSV_FIXTURE).unwrap();
        let rep = load_records(&p, RecordFormat::Csv, LoadMode::Strict).unwrap();
        assert_eq!(rep.records.len(), 3);
        assert_eq!(rep.records[0].extra["temperature"], 300.0);
        assert!(rep.records[1].extra.is_empty());
        assert_eq!(rep.records[2].f_character, None);
    }

    #[test]
    fn negative_hull_lenient_vs_strict() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.csv");
        fs::write(&p, CSV_FIXTURE.replace("-0.3,0.0,", "-0.3,-0.1,")).unwrap();
        let rep = load_records(&p, RecordFormat::Csv, LoadMode::Lenient).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.skipped[0].line, 3);
        let err = load_records(&p, RecordFormat::Csv, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::Row { line: 3, .. }));
    }

    #[test]
    fn duplicate_ids_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.csv");
        fs::write(&p, CSV_FIXTURE.replace("mp-2", "mp-1")).unwrap();
        assert!(matches!(
            load_records(&p, RecordFormat::Csv, LoadMode::Lenient),
            Err(DatasetError::DuplicateId { line: 3, .. })
        ));
        fs::write(&p, "name,e\nx,1\n").unwrap();
        assert!(matches!(
            load_records(&p, RecordFormat::Csv, LoadMode::Lenient),
            Err(DatasetError::Schema(_))
        ));
        assert!(matches!(
            load_records(&dir.path().join("missing.csv"), RecordFormat::Csv, LoadMode::Lenient),
            Err(DatasetError::Io { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_with_cifs() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = tih2();
        r.extra.insert("pressure".into(), 1.0);
        r.f_character = Some(0.1);
        let p = dir.path().join("records.jsonl");
        write_records_jsonl(&[r.clone()], &p).unwrap();
        assert!(dir.path().join("cifs/mp-1.cif").exists());
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"schema_version\":1"));
        let back = load_records(&p, RecordFormat::JsonLines, LoadMode::Strict)
            .unwrap()
            .records;
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].formula, r.formula);
        assert_eq!(back[0].extra, r.extra);
        assert!(back[0]
            .structure
            .as_ref()
            .unwrap()
            .approx_eq(r.structure.as_ref().unwrap(), 1e-6));
        let csv_path = dir.path().join("records.csv");
        write_records_csv(&back, &csv_path).unwrap();
        let again = load_records(&csv_path, RecordFormat::Csv, LoadMode::Strict)
            .unwrap()
            .records;
        assert_eq!(again[0].extra, r.extra);
        assert_eq!(again[0].cif_path.as_deref(), Some("cifs/mp-1.cif"));
    }

    #[test]
    fn features_by_name() {
        let mut r = tih2();
        r.extra.insert("temperature".into(), 300.0);
        let v = ScoreVariant::Modified;
        assert_eq!(r.feature("e_form", v).unwrap(), Some(-0.45));
        assert_eq!(r.feature("temperature", v).unwrap(), Some(300.0));
        assert_eq!(r.feature("density", v).unwrap(), None);
        assert!(r.feature("nonsense", v).is_err());
        assert!(matches!(
            feature_matrix(&[r], &["density"], v),
            Err(DatasetError::MissingValue { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 3usize..500, seed in any::<u64>()) {
            let spec = SplitSpec::standard(seed);
            let p = split_indices(n, &spec).unwrap();
            let (tr, va, te) = spec.sizes(n);
            prop_assert_eq!((p.train.len(), p.val.len(), p.test.len()), (tr, va, te));
            let mut all: Vec<usize> = p.train.iter().chain(&p.val).chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn discretize_preserves_order(
            values in prop::collection::vec(-100.0f64..100.0, 2..60),
            bins in 2usize..6,
            wide in any::<bool>(),
        ) {
            let strategy = if wide { BinStrategy::EqualWidth } else { BinStrategy::EqualFrequency };
            let Ok(d) = discretize(&values, bins, strategy) else { return Ok(()); };
            for i in 0..values.len() {
                prop_assert!(d.bins[i] < bins);
                for j in 0..values.len() {
                    if values[i] <= values[j] { prop_assert!(d.bins[i] <= d.bins[j]); }
                }
            }
        }
    }
}
