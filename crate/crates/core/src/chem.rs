//! Chemical formulas, compositions and a small periodic table.
//!
//! Compositions are element → atom-count maps parsed from plain formulas such
//! as `LiAl3H6` or `Ca(AlH4)2`. The periodic data covers Z = 1..103 with
//! abridged conventional atomic weights (CIAAW 2021, five significant figures).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("empty formula")]
    Empty,
    #[error("unknown element symbol `{0}`")]
    UnknownElement(String),
    #[error("zero count or multiplier at byte {0}")]
    ZeroCount(usize),
    #[error("unbalanced parentheses in `{0}`")]
    UnbalancedParens(String),
    #[error("nested parentheses are not supported in `{0}`")]
    NestedParens(String),
    #[error("unexpected character `{ch}` at byte {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("count overflow at byte {0}")]
    Overflow(usize),
    #[error("composition must contain at least one atom")]
    EmptyComposition,
}

/// Periodic-table group of an element. The f-block series carry no group number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Number(u8),
    Lanthanide,
    Actinide,
}

impl Group {
    pub fn number(self) -> Option<u8> {
        match self {
            Group::Number(n) => Some(n),
            _ => None,
        }
    }
}

/// Static classification record for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementInfo {
    pub symbol: &'static str,
    pub atomic_number: u8,
    pub standard_atomic_weight: f64,
    pub group: Group,
    pub is_metal: bool,
    pub is_metalloid: bool,
}

// (symbol, standard atomic weight in g/mol), indexed by Z - 1.
const ELEMENTS: [(&str, f64); 103] = [
    ("H", 1.008),
    ("He", 4.0026),
    ("Li", 6.94),
    ("Be", 9.0122),
    ("B", 10.81),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("F", 18.998),
    ("Ne", 20.180),
    ("Na", 22.990),
    ("Mg", 24.305),
    ("Al", 26.982),
    ("Si", 28.085),
    ("P", 30.974),
    ("S", 32.06),
    ("Cl", 35.45),
    ("Ar", 39.95),
    ("K", 39.098),
    ("Ca", 40.078),
    ("Sc", 44.956),
    ("Ti", 47.867),
    ("V", 50.942),
    ("Cr", 51.996),
    ("Mn", 54.938),
    ("Fe", 55.845),
    ("Co", 58.933),
    ("Ni", 58.693),
    ("Cu", 63.546),
    ("Zn", 65.38),
    ("Ga", 69.723),
    ("Ge", 72.630),
    ("As", 74.922),
    ("Se", 78.971),
    ("Br", 79.904),
    ("Kr", 83.798),
    ("Rb", 85.468),
    ("Sr", 87.62),
    ("Y", 88.906),
    ("Zr", 91.224),
    ("Nb", 92.906),
    ("Mo", 95.95),
    ("Tc", 97.0),
    ("Ru", 101.07),
    ("Rh", 102.91),
    ("Pd", 106.42),
    ("Ag", 107.87),
    ("Cd", 112.41),
    ("In", 114.82),
    ("Sn", 118.71),
    ("Sb", 121.76),
    ("Te", 127.60),
    ("I", 126.90),
    ("Xe", 131.29),
    ("Cs", 132.91),
    ("Ba", 137.33),
    ("La", 138.91),
    ("Ce", 140.12),
    ("Pr", 140.91),
    ("Nd", 144.24),
    ("Pm", 145.0),
    ("Sm", 150.36),
    ("Eu", 151.96),
    ("Gd", 157.25),
    ("Tb", 158.93),
    ("Dy", 162.50),
    ("Ho", 164.93),
    ("Er", 167.26),
    ("Tm", 168.93),
    ("Yb", 173.05),
    ("Lu", 174.97),
    ("Hf", 178.49),
    ("Ta", 180.95),
    ("W", 183.84),
    ("Re", 186.21),
    ("Os", 190.23),
    ("Ir", 192.22),
    ("Pt", 195.08),
    ("Au", 196.97),
    ("Hg", 200.59),
    ("Tl", 204.38),
    ("Pb", 207.2),
    ("Bi", 208.98),
    ("Po", 209.0),
    ("At", 210.0),
    ("Rn", 222.0),
    ("Fr", 223.0),
    ("Ra", 226.0),
    ("Ac", 227.0),
    ("Th", 232.04),
    ("Pa", 231.04),
    ("U", 238.03),
    ("Np", 237.0),
    ("Pu", 244.0),
    ("Am", 243.0),
    ("Cm", 247.0),
    ("Bk", 247.0),
    ("Cf", 251.0),
    ("Es", 252.0),
    ("Fm", 257.0),
    ("Md", 258.0),
    ("No", 259.0),
    ("Lr", 262.0),
];

const NON_METALS: [&str; 17] = [
    "H", "He", "C", "N", "O", "F", "Ne", "P", "S", "Cl", "Ar", "Se", "Br", "Kr", "I", "Xe", "Rn",
];
const METALLOIDS: [&str; 6] = ["B", "Si", "Ge", "As", "Sb", "Te"];
// At is a halogen and treated as a non-metal here.
const EXTRA_NON_METALS: [&str; 1] = ["At"];

/// A chemical element, identified by its atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..=103).contains(&z).then_some(Element(z))
    }

    pub fn from_symbol(symbol: &str) -> Result<Element, ChemError> {
        ELEMENTS
            .iter()
            .position(|(s, _)| *s == symbol)
            .map(|i| Element(i as u8 + 1))
            .ok_or_else(|| ChemError::UnknownElement(symbol.to_string()))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        ELEMENTS[self.0 as usize - 1].0
    }

    pub fn atomic_weight(self) -> f64 {
        ELEMENTS[self.0 as usize - 1].1
    }

    pub fn group(self) -> Group {
        group_of(self.0)
    }

    /// Metal under the default classification; metalloids count as non-metals.
    pub fn is_metal(self) -> bool {
        let s = self.symbol();
        !(NON_METALS.contains(&s) || METALLOIDS.contains(&s) || EXTRA_NON_METALS.contains(&s))
    }

    pub fn is_metalloid(self) -> bool {
        METALLOIDS.contains(&self.symbol())
    }

    pub fn info(self) -> ElementInfo {
        ElementInfo {
            symbol: self.symbol(),
            atomic_number: self.0,
            standard_atomic_weight: self.atomic_weight(),
            group: self.group(),
            is_metal: self.is_metal(),
            is_metalloid: self.is_metalloid(),
        }
    }

    pub fn all() -> impl Iterator<Item = Element> {
        (1..=103u8).map(Element)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Element {
    type Err = ChemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Element::from_symbol(s)
    }
}

impl Serialize for Element {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Element::from_symbol(&s).map_err(serde::de::Error::custom)
    }
}

fn group_of(z: u8) -> Group {
    match z {
        1 | 3 | 11 | 19 | 37 | 55 | 87 => Group::Number(1),
        4 | 12 | 20 | 38 | 56 | 88 => Group::Number(2),
        2 | 10 | 18 | 36 | 54 | 86 => Group::Number(18),
        5..=9 => Group::Number(z + 8),
        13..=17 => Group::Number(z),
        21..=35 => Group::Number(z - 18),
        39..=53 => Group::Number(z - 36),
        57..=71 => Group::Lanthanide,
        72..=85 => Group::Number(z - 68),
        89..=103 => Group::Actinide,
        _ => unreachable!("atomic number out of table range"),
    }
}

/// Look up the classification record for an element symbol.
pub fn classify(symbol: &str) -> Result<ElementInfo, ChemError> {
    Element::from_symbol(symbol).map(Element::info)
}

/// Element → positive atom count. Never empty and never holds a zero count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Composition {
    counts: BTreeMap<Element, u32>,
}

impl Composition {
    pub fn new(counts: impl IntoIterator<Item = (Element, u32)>) -> Result<Self, ChemError> {
        let mut map = BTreeMap::new();
        for (e, n) in counts {
            if n > 0 {
                let slot = map.entry(e).or_insert(0u32);
                *slot = slot.checked_add(n).ok_or(ChemError::Overflow(0))?;
            }
        }
        if map.is_empty() {
            return Err(ChemError::EmptyComposition);
        }
        Ok(Composition { counts: map })
    }

    pub fn from_symbols(pairs: &[(&str, u32)]) -> Result<Self, ChemError> {
        let mut v = Vec::with_capacity(pairs.len());
        for (s, n) in pairs {
            v.push((Element::from_symbol(s)?, *n));
        }
        Composition::new(v)
    }

    pub fn count(&self, e: Element) -> u32 {
        self.counts.get(&e).copied().unwrap_or(0)
    }

    pub fn count_of(&self, symbol: &str) -> u32 {
        Element::from_symbol(symbol).map(|e| self.count(e)).unwrap_or(0)
    }

    /// Entries ordered by atomic number.
    pub fn iter(&self) -> impl Iterator<Item = (Element, u32)> + '_ {
        self.counts.iter().map(|(e, n)| (*e, *n))
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        self.counts.keys().copied()
    }

    pub fn contains(&self, e: Element) -> bool {
        self.counts.contains_key(&e)
    }

    pub fn num_elements(&self) -> usize {
        self.counts.len()
    }

    pub fn total_atoms(&self) -> u64 {
        self.counts.values().map(|&n| n as u64).sum()
    }

    pub fn molar_mass(&self) -> f64 {
        self.iter().map(|(e, n)| n as f64 * e.atomic_weight()).sum()
    }

    pub fn hydrogen_weight_fraction(&self) -> f64 {
        let h = self.count(Element::H) as f64 * Element::H.atomic_weight();
        h / self.molar_mass()
    }

    pub fn reduced_ratio(&self) -> Composition {
        let g = self.counts.values().copied().fold(0, gcd);
        Composition {
            counts: self.counts.iter().map(|(e, n)| (*e, n / g)).collect(),
        }
    }

    pub fn same_elements(&self, other: &Composition) -> bool {
        self.counts.keys().eq(other.counts.keys())
    }

    /// Multiset union of two compositions.
    pub fn merge(&self, other: &Composition) -> Composition {
        let mut counts = self.counts.clone();
        for (e, n) in other.iter() {
            *counts.entry(e).or_insert(0) += n;
        }
        Composition { counts }
    }

    pub fn scaled(&self, k: u32) -> Result<Composition, ChemError> {
        Composition::new(self.iter().map(|(e, n)| (e, n * k)))
    }

    /// Formula with every count written out, e.g. `Ti1H2`.
    pub fn to_explicit_string(&self) -> String {
        self.render(true)
    }

    fn render(&self, explicit_ones: bool) -> String {
        let mut out = String::new();
        let ordered = self
            .iter()
            .filter(|(e, _)| *e != Element::H)
            .chain(self.counts.get(&Element::H).map(|&n| (Element::H, n)));
        for (e, n) in ordered {
            out.push_str(e.symbol());
            if n != 1 || explicit_ones {
                out.push_str(&n.to_string());
            }
        }
        out
    }
}

/// Canonical formula: non-hydrogen elements by atomic number, hydrogen last,
/// counts of one omitted.
impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

impl FromStr for Composition {
    type Err = ChemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

impl Serialize for Composition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Composition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_formula(&s).map_err(serde::de::Error::custom)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Cursor<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Optional positive integer; `None` when no digits follow.
    fn count(&mut self) -> Result<Option<u32>, ChemError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(None);
        }
        let n: u32 = self.text[start..self.pos]
            .parse()
            .map_err(|_| ChemError::Overflow(start))?;
        if n == 0 {
            return Err(ChemError::ZeroCount(start));
        }
        Ok(Some(n))
    }

    fn element(&mut self) -> Result<Element, ChemError> {
        let start = self.pos;
        self.pos += 1;
        if matches!(self.peek(), Some(b'a'..=b'z')) {
            self.pos += 1;
        }
        Element::from_symbol(&self.text[start..self.pos])
    }

    fn unexpected(&self) -> ChemError {
        let ch = self.text[self.pos..].chars().next().unwrap_or('\0');
        ChemError::UnexpectedChar { ch, pos: self.pos }
    }
}

/// Parse formulas made of `Symbol[count]` tokens with at most one level of
/// parenthesized groups carrying a multiplier, e.g. `Ca(AlH4)2`.
pub fn parse_formula(text: &str) -> Result<Composition, ChemError> {
    if text.is_empty() {
        return Err(ChemError::Empty);
    }
    let mut cur = Cursor {
        text,
        bytes: text.as_bytes(),
        pos: 0,
    };
    let mut totals: BTreeMap<Element, u64> = BTreeMap::new();
    // Open group contents while inside parentheses.
    let mut group: Option<Vec<(Element, u64)>> = None;

    while let Some(b) = cur.peek() {
        match b {
            b'A'..=b'Z' => {
                let e = cur.element()?;
                let n = cur.count()?.unwrap_or(1) as u64;
                match group.as_mut() {
                    Some(g) => g.push((e, n)),
                    None => *totals.entry(e).or_insert(0) += n,
                }
            }
            b'(' => {
                if group.is_some() {
                    return Err(ChemError::NestedParens(text.to_string()));
                }
                cur.pos += 1;
                group = Some(Vec::new());
            }
            b')' => {
                let g = group
                    .take()
                    .ok_or_else(|| ChemError::UnbalancedParens(text.to_string()))?;
                cur.pos += 1;
                if g.is_empty() {
                    return Err(ChemError::Empty);
                }
                let mult = cur.count()?.unwrap_or(1) as u64;
                for (e, n) in g {
                    *totals.entry(e).or_insert(0) += n * mult;
                }
            }
            _ => return Err(cur.unexpected()),
        }
    }
    if group.is_some() {
        return Err(ChemError::UnbalancedParens(text.to_string()));
    }
    let mut counts = Vec::with_capacity(totals.len());
    for (e, n) in totals {
        let n = u32::try_from(n).map_err(|_| ChemError::Overflow(0))?;
        counts.push((e, n));
    }
    Composition::new(counts)
}

pub fn molar_mass(c: &Composition) -> f64 {
    c.molar_mass()
}

pub fn hydrogen_weight_fraction(c: &Composition) -> f64 {
    c.hydrogen_weight_fraction()
}

pub fn reduced_ratio(c: &Composition) -> Composition {
    c.reduced_ratio()
}
