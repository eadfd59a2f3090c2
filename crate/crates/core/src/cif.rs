//! Minimal CIF reading and writing.
//!
//! Only the P1 view is represented: cell lengths and angles plus the atom-site
//! loop, taken as listed. Symmetry operations in input files are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{ChemError, Composition, Element};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CifError {
    #[error("no data_ block found")]
    NoDataBlock,
    #[error("missing mandatory tag {0}")]
    MissingTag(&'static str),
    #[error("non-numeric value `{value}` for {tag}")]
    NonNumeric { tag: String, value: String },
    #[error("malformed loop at line {line}: {reason}")]
    MalformedLoop { line: usize, reason: String },
    #[error("unterminated text field starting at line {0}")]
    UnterminatedText(usize),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("structure has no atomic sites")]
    NoSites,
    #[error("site {index}: {source}")]
    Site { index: usize, source: ChemError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Lattice {
    pub fn cubic(a: f64) -> Self {
        Lattice {
            a,
            b: a,
            c: a,
            alpha: 90.0,
            beta: 90.0,
            gamma: 90.0,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Lattice {
            a: v[0],
            b: v[1],
            c: v[2],
            alpha: v[3],
            beta: v[4],
            gamma: v[5],
        }
    }

    /// Cell volume in Å³.
    pub fn volume(&self) -> f64 {
        let (ca, cb, cg) = (
            self.alpha.to_radians().cos(),
            self.beta.to_radians().cos(),
            self.gamma.to_radians().cos(),
        );
        let root = (1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg).max(0.0);
        self.a * self.b * self.c * root.sqrt()
    }

    pub fn validate(&self) -> Result<(), CifError> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CifError::InvalidLattice(format!("length {name} = {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0 && v < 180.0) {
                return Err(CifError::InvalidLattice(format!("angle {name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub element: Element,
    pub frac: [f64; 3],
}

impl Site {
    pub fn new(element: Element, frac: [f64; 3]) -> Self {
        Site {
            element,
            frac: frac.map(wrap_unit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub lattice: Lattice,
    pub sites: Vec<Site>,
    pub source_id: Option<String>,
}

/// Map a fractional coordinate into [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

impl Structure {
    pub fn validate(&self) -> Result<(), CifError> {
        self.lattice.validate()?;
        if self.sites.is_empty() {
            return Err(CifError::NoSites);
        }
        for (i, s) in self.sites.iter().enumerate() {
            if s.frac.iter().any(|x| !(0.0..1.0).contains(x)) {
                return Err(CifError::MalformedLoop {
                    line: 0,
                    reason: format!("site {i} coordinate outside [0, 1)"),
                });
            }
        }
        Ok(())
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn composition(&self) -> Result<Composition, ChemError> {
        Composition::new(self.sites.iter().map(|s| (s.element, 1)))
    }

    /// Geometric equality up to `tol` on lattice values and periodic coordinate
    /// differences. `source_id` is not compared.
    pub fn approx_eq(&self, other: &Structure, tol: f64) -> bool {
        let lat = self
            .lattice
            .as_array()
            .iter()
            .zip(other.lattice.as_array())
            .all(|(a, b)| (a - b).abs() <= tol);
        lat && self.sites.len() == other.sites.len()
            && self.sites.iter().zip(&other.sites).all(|(a, b)| {
                a.element == b.element
                    && a.frac.iter().zip(b.frac).all(|(x, y)| {
                        let d = (x - y).abs();
                        d.min(1.0 - d) <= tol
                    })
            })
    }
}

pub fn site_count(s: &Structure) -> usize {
    s.site_count()
}

#[derive(Debug)]
struct Token {
    text: String,
    line: usize,
    quoted: bool,
}

fn tokenize(text: &str) -> Result<Vec<Token>, CifError> {
    let mut tokens = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let lineno = idx + 1;
        if let Some(rest) = line.strip_prefix(';') {
            // Semicolon-delimited text field runs to the next line starting with ';'.
            let mut field = rest.to_string();
            let mut closed = false;
            for (_, l) in lines.by_ref() {
                if l.starts_with(';') {
                    closed = true;
                    break;
                }
                field.push('\n');
                field.push_str(l);
            }
            if !closed {
                return Err(CifError::UnterminatedText(lineno));
            }
            tokens.push(Token {
                text: field,
                line: lineno,
                quoted: true,
            });
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c == '#' {
                break;
            } else if c == '\'' || c == '"' {
                let quote = c;
                let start = i + 1;
                let mut j = start;
                // A closing quote must be followed by whitespace or end of line.
                while j < chars.len() && !(chars[j] == quote && chars.get(j + 1).is_none_or(|n| n.is_whitespace())) {
                    j += 1;
                }
                tokens.push(Token {
                    text: chars[start..j.min(chars.len())].iter().collect(),
                    line: lineno,
                    quoted: true,
                });
                i = j + 1;
            } else {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() {
                    i += 1;
                }
                tokens.push(Token {
                    text: chars[start..i].iter().collect(),
                    line: lineno,
                    quoted: false,
                });
            }
        }
    }
    Ok(tokens)
}

fn is_keyword(t: &Token) -> bool {
    !t.quoted
        && (t.text.starts_with('_')
            || t.text.eq_ignore_ascii_case("loop_")
            || t.text.to_ascii_lowercase().starts_with("data_"))
}

fn parse_number(tag: &str, value: &str) -> Result<f64, CifError> {
    // Strip a trailing standard uncertainty such as `5.431(2)`.
    let v = value.split('(').next().unwrap_or(value);
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CifError::NonNumeric {
            tag: tag.to_string(),
            value: value.to_string(),
        })
}

/// Element symbol from a type symbol or label such as `Ti4+`, `H1`, `Hf2a`.
fn element_from_label(raw: &str) -> Result<Element, ChemError> {
    let letters: String = raw.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    if letters.len() >= 2 {
        if let Ok(e) = Element::from_symbol(&letters[..2]) {
            return Ok(e);
        }
    }
    match letters.get(..1) {
        Some(one) => Element::from_symbol(one),
        None => Err(ChemError::UnknownElement(raw.to_string())),
    }
}

struct Loop {
    tags: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// Parse the first data block of a CIF document.
pub fn parse_cif(text: &str) -> Result<Structure, CifError> {
    let tokens = tokenize(text)?;
    let start = tokens
        .iter()
        .position(|t| !t.quoted && t.text.to_ascii_lowercase().starts_with("data_"))
        .ok_or(CifError::NoDataBlock)?;
    let block_name = tokens[start].text[5..].to_string();

    let mut items: HashMap<String, String> = HashMap::new();
    let mut loops: Vec<Loop> = Vec::new();
    let mut i = start + 1;
    while i < tokens.len() {
        let t = &tokens[i];
        if !t.quoted && t.text.to_ascii_lowercase().starts_with("data_") {
            break;
        }
        if !t.quoted && t.text.eq_ignore_ascii_case("loop_") {
            let line = t.line;
            i += 1;
            let mut tags = Vec::new();
            while i < tokens.len() && !tokens[i].quoted && tokens[i].text.starts_with('_') {
                tags.push(tokens[i].text.to_ascii_lowercase());
                i += 1;
            }
            if tags.is_empty() {
                return Err(CifError::MalformedLoop {
                    line,
                    reason: "loop_ without tags".into(),
                });
            }
            let mut values = Vec::new();
            while i < tokens.len() && !is_keyword(&tokens[i]) {
                values.push(tokens[i].text.clone());
                i += 1;
            }
            if values.len() % tags.len() != 0 {
                return Err(CifError::MalformedLoop {
                    line,
                    reason: format!("{} values do not fill rows of {} columns", values.len(), tags.len()),
                });
            }
            let rows = values.chunks(tags.len()).map(<[String]>::to_vec).collect();
            loops.push(Loop { tags, rows });
        } else if !t.quoted && t.text.starts_with('_') {
            let tag = t.text.to_ascii_lowercase();
            let value = tokens
                .get(i + 1)
                .filter(|v| !is_keyword(v))
                .ok_or_else(|| CifError::MalformedLoop {
                    line: t.line,
                    reason: format!("tag {tag} has no value"),
                })?;
            items.insert(tag, value.text.clone());
            i += 2;
        } else {
            i += 1;
        }
    }

    const CELL: [&str; 6] = [
        "_cell_length_a",
        "_cell_length_b",
        "_cell_length_c",
        "_cell_angle_alpha",
        "_cell_angle_beta",
        "_cell_angle_gamma",
    ];
    let mut cell = [0.0; 6];
    for (slot, tag) in cell.iter_mut().zip(CELL) {
        let raw = items.get(tag).ok_or(CifError::MissingTag(tag))?;
        *slot = parse_number(tag, raw)?;
    }
    let lattice = Lattice::from_array(cell);
    lattice.validate()?;

    let atoms = loops
        .iter()
        .find(|l| l.tags.iter().any(|t| t == "_atom_site_fract_x"))
        .ok_or(CifError::MissingTag("_atom_site_fract_x"))?;
    let col = |name: &'static str| atoms.tags.iter().position(|t| t == name);
    let species_col = col("_atom_site_type_symbol")
        .or_else(|| col("_atom_site_label"))
        .ok_or(CifError::MissingTag("_atom_site_type_symbol"))?;
    let fx = col("_atom_site_fract_x").ok_or(CifError::MissingTag("_atom_site_fract_x"))?;
    let fy = col("_atom_site_fract_y").ok_or(CifError::MissingTag("_atom_site_fract_y"))?;
    let fz = col("_atom_site_fract_z").ok_or(CifError::MissingTag("_atom_site_fract_z"))?;

    let mut sites = Vec::with_capacity(atoms.rows.len());
    for (index, row) in atoms.rows.iter().enumerate() {
        let element = element_from_label(&row[species_col]).map_err(|source| CifError::Site { index, source })?;
        let frac = [
            parse_number("_atom_site_fract_x", &row[fx])?,
            parse_number("_atom_site_fract_y", &row[fy])?,
            parse_number("_atom_site_fract_z", &row[fz])?,
        ];
        sites.push(Site::new(element, frac));
    }
    if sites.is_empty() {
        return Err(CifError::NoSites);
    }
    Ok(Structure {
        lattice,
        sites,
        source_id: (!block_name.is_empty()).then_some(block_name),
    })
}

fn fixed6(x: f64) -> String {
    format!("{x:.6}")
}

fn fixed6_frac(x: f64) -> String {
    let s = fixed6(x);
    // Rounding can land on 1.000000, which is the same lattice point as 0.
    if s == "1.000000" || s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Emit a P1 CIF block with six fractional digits.
pub fn write_cif(s: &Structure) -> Result<String, CifError> {
    s.validate()?;
    let name = s.source_id.as_deref().unwrap_or("structure");
    let mut out = String::new();
    let l = &s.lattice;
    let _ = writeln!(out, "data_{name}");
    let _ = writeln!(out, "_symmetry_space_group_name_H-M   'P 1'");
    let _ = writeln!(out, "_symmetry_Int_Tables_number   1");
    let _ = writeln!(out, "_cell_length_a   {}", fixed6(l.a));
    let _ = writeln!(out, "_cell_length_b   {}", fixed6(l.b));
    let _ = writeln!(out, "_cell_length_c   {}", fixed6(l.c));
    let _ = writeln!(out, "_cell_angle_alpha   {}", fixed6(l.alpha));
    let _ = writeln!(out, "_cell_angle_beta   {}", fixed6(l.beta));
    let _ = writeln!(out, "_cell_angle_gamma   {}", fixed6(l.gamma));
    if let Ok(c) = s.composition() {
        let _ = writeln!(out, "_chemical_formula_sum   '{c}'");
    }
    out.push_str("loop_\n _atom_site_label\n _atom_site_type_symbol\n");
    out.push_str(" _atom_site_fract_x\n _atom_site_fract_y\n _atom_site_fract_z\n");
    let mut per_element: HashMap<Element, usize> = HashMap::new();
    for site in &s.sites {
        let k = per_element.entry(site.element).or_insert(0);
        *k += 1;
        let _ = writeln!(
            out,
            " {sym}{k} {sym} {} {} {}",
            fixed6_frac(site.frac[0]),
            fixed6_frac(site.frac[1]),
            fixed6_frac(site.frac[2]),
            sym = site.element.symbol(),
        );
    }
    Ok(out)
}
