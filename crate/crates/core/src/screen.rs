//! Rule-based filtering, ranking and reference-database matching of
//! generated candidates.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{Composition, Element};

#[derive(Debug, thiserror::Error)]
pub enum ScreenError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
}

impl Rule {
    pub const ALL: [Rule; 10] = [
        Rule::R1,
        Rule::R2,
        Rule::R3,
        Rule::R4,
        Rule::R5,
        Rule::R6,
        Rule::R7,
        Rule::R8,
        Rule::R9,
        Rule::R10,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Rule::R1 => "hydrogen exceeds the cap with a group-16 element present",
            Rule::R2 => "hydrogen exceeds the cap with a group-15 element present",
            Rule::R3 => "hydrogen exceeds the cap with a group-14 element present",
            Rule::R4 => "hydrogen exceeds the cap with a group-13 element present",
            Rule::R5 => "hydrogen exceeds the metal capacity",
            Rule::R6 => "only N, O, S, P, Se and H",
            Rule::R7 => "only non-metals and hydrogen",
            Rule::R8 => "no metal element",
            Rule::R9 => "contains a group-17 element",
            Rule::R10 => "distinct non-hydrogen elements not 3 or 4",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Enforce H <= 2 per metal atom even without p-block elements (R5).
    pub strict_metal_cap: bool,
    /// Require three or four distinct non-hydrogen elements (R10).
    pub require_element_count: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FilterVerdict {
    pub id: String,
    pub formula: String,
    pub kept: bool,
    pub failed_rule: Option<Rule>,
    pub detail: String,
}

/// Atom counts per hydrogen-bearing class. Group membership counts only
/// non-metal and metalloid atoms; Al, Ga, Sn and the like are metals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Classes {
    h: u32,
    g13: u32,
    g14: u32,
    g15: u32,
    g16: u32,
    metal: u32,
}

impl Classes {
    fn of(c: &Composition) -> Self {
        let mut k = Classes::default();
        for (e, n) in c.iter() {
            if e == Element::H {
                k.h += n;
            } else if e.is_metal() {
                k.metal += n;
            } else {
                match e.group().number() {
                    Some(13) => k.g13 += n,
                    Some(14) => k.g14 += n,
                    Some(15) => k.g15 += n,
                    Some(16) => k.g16 += n,
                    _ => {}
                }
            }
        }
        k
    }

    /// Combined hydrogen cap: each class present adds its own allowance.
    fn cap(&self) -> u32 {
        let mut cap = 2 * self.g16 + 2 * self.metal;
        if self.g15 > 0 {
            cap += self.g15 + 2;
        }
        if self.g14 > 0 {
            cap += 2 * self.g14 + 2;
        }
        if self.g13 > 0 {
            // strict: H < 2 n
            cap += 2 * self.g13 - 1;
        }
        cap
    }
}

const SOLELY: [&str; 6] = ["N", "O", "S", "P", "Se", "H"];

/// First failing rule and a short explanation, or `None` if kept.
pub fn first_failure(c: &Composition, config: &FilterConfig) -> Option<(Rule, String)> {
    let k = Classes::of(c);
    let cap = k.cap();
    let over = k.h > cap;
    let cap_detail = |class: &str, n: u32| format!("H{} with {n} {class} atom(s); cap {cap}", k.h);
    let checks = [
        (Rule::R1, k.g16, "group-16"),
        (Rule::R2, k.g15, "group-15"),
        (Rule::R3, k.g14, "group-14"),
        (Rule::R4, k.g13, "group-13"),
    ];
    for (rule, n, class) in checks {
        if n > 0 && over {
            return Some((rule, cap_detail(class, n)));
        }
    }
    if config.strict_metal_cap && k.metal > 0 && over {
        return Some((Rule::R5, cap_detail("metal", k.metal)));
    }
    if c.elements().all(|e| SOLELY.contains(&e.symbol())) {
        return Some((Rule::R6, "element set within N, O, S, P, Se, H".into()));
    }
    let non_h: Vec<Element> = c.elements().filter(|e| *e != Element::H).collect();
    if c.contains(Element::H) && non_h.iter().all(|e| !e.is_metal()) {
        return Some((Rule::R7, "non-metals and hydrogen only".into()));
    }
    if k.metal == 0 {
        return Some((Rule::R8, "no metal".into()));
    }
    if let Some(x) = c.elements().find(|e| e.group().number() == Some(17)) {
        return Some((Rule::R9, format!("contains {x}")));
    }
    if config.require_element_count && !(3..=4).contains(&non_h.len()) {
        return Some((Rule::R10, format!("{} distinct non-H elements", non_h.len())));
    }
    None
}

pub fn verdict(id: &str, c: &Composition, config: &FilterConfig) -> FilterVerdict {
    let failure = first_failure(c, config);
    FilterVerdict {
        id: id.to_string(),
        formula: c.to_string(),
        kept: failure.is_none(),
        detail: failure
            .as_ref()
            .map(|(r, d)| format!("{}: {d}", r.description()))
            .unwrap_or_default(),
        failed_rule: failure.map(|(r, _)| r),
    }
}

/// One verdict per candidate, in input order.
pub fn apply_filters(candidates: &[(String, Composition)], config: &FilterConfig) -> Vec<FilterVerdict> {
    candidates.par_iter().map(|(id, c)| verdict(id, c, config)).collect()
}

pub fn write_verdicts_csv<W: Write>(verdicts: &[FilterVerdict], writer: W) -> Result<(), ScreenError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "formula", "kept", "failed_rule", "detail"])?;
    for v in verdicts {
        w.write_record([
            v.id.as_str(),
            v.formula.as_str(),
            if v.kept { "true" } else { "false" },
            &v.failed_rule.map(|r| r.to_string()).unwrap_or_default(),
            v.detail.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub formula: Composition,
    pub e_form: f64,
    pub w_h2: f64,
    pub score: f64,
}

fn score_key(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Descending score; ties go to higher w_h2, then the lexicographically
/// smaller formula, then input order. NaN scores sort last.
pub fn rank(items: &[ScoredCandidate]) -> Vec<ScoredCandidate> {
    let mut keyed: Vec<(String, &ScoredCandidate)> = items.iter().map(|c| (c.formula.to_string(), c)).collect();
    keyed.sort_by(|(fa, a), (fb, b)| {
        score_key(b.score)
            .total_cmp(&score_key(a.score))
            .then(score_key(b.w_h2).total_cmp(&score_key(a.w_h2)))
            .then(fa.cmp(fb))
    });
    keyed.into_iter().map(|(_, c)| c.clone()).collect()
}

pub fn top_k<T: Clone>(ranked: &[T], k: usize) -> Vec<T> {
    ranked[..k.min(ranked.len())].to_vec()
}

pub fn write_ranked_csv<W: Write>(ranked: &[ScoredCandidate], writer: W) -> Result<(), ScreenError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "id", "formula", "e_form", "w_h2", "score"])?;
    for (i, c) in ranked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            c.id.clone(),
            c.formula.to_string(),
            c.e_form.to_string(),
            c.w_h2.to_string(),
            c.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ordered weakest to strongest, so `>=` reads as "at least".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchKind {
    NoMatch,
    SameElements,
    SameRatio,
    SameFormula,
}

impl fmt::Display for MatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchKind::NoMatch => "no_match",
            MatchKind::SameElements => "same_elements",
            MatchKind::SameRatio => "same_ratio",
            MatchKind::SameFormula => "same_formula",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchClass {
    pub kind: MatchKind,
    pub matched_id: Option<String>,
}

impl MatchClass {
    pub fn same_formula(&self) -> bool {
        self.kind >= MatchKind::SameFormula
    }
    pub fn same_ratio(&self) -> bool {
        self.kind >= MatchKind::SameRatio
    }
    pub fn same_elements(&self) -> bool {
        self.kind >= MatchKind::SameElements
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub id: String,
    pub formula: Composition,
}

/// Strongest class reached against any entry; the id is the first entry in
/// database order that reaches it.
pub fn match_classify(candidate: &Composition, db: &[ReferenceEntry]) -> MatchClass {
    let ratio = candidate.reduced_ratio();
    let mut best = MatchClass {
        kind: MatchKind::NoMatch,
        matched_id: None,
    };
    for entry in db {
        let kind = if entry.formula == *candidate {
            MatchKind::SameFormula
        } else if entry.formula.reduced_ratio() == ratio {
            MatchKind::SameRatio
        } else if entry.formula.same_elements(candidate) {
            MatchKind::SameElements
        } else {
            MatchKind::NoMatch
        };
        if kind > best.kind {
            best = MatchClass {
                kind,
                matched_id: Some(entry.id.clone()),
            };
            if kind == MatchKind::SameFormula {
                break;
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyPoint {
    pub n: usize,
    pub same_formula_rate: f64,
    pub same_ratio_rate: f64,
    pub same_elements_rate: f64,
}

/// Fraction of the top n reaching at least each class, for n = 1..=len.
pub fn cumulative_accuracy(classes: &[MatchKind]) -> Result<Vec<AccuracyPoint>, ScreenError> {
    if classes.is_empty() {
        return Err(ScreenError::Empty("candidate list"));
    }
    let mut counts = [0usize; 3];
    Ok(classes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            counts[0] += (k >= MatchKind::SameFormula) as usize;
            counts[1] += (k >= MatchKind::SameRatio) as usize;
            counts[2] += (k >= MatchKind::SameElements) as usize;
            let n = i + 1;
            AccuracyPoint {
                n,
                same_formula_rate: counts[0] as f64 / n as f64,
                same_ratio_rate: counts[1] as f64 / n as f64,
                same_elements_rate: counts[2] as f64 / n as f64,
            }
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(curve: &[AccuracyPoint], writer: W) -> Result<(), ScreenError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "same_formula_rate", "same_ratio_rate", "same_elements_rate"])?;
    for p in curve {
        w.write_record([
            p.n.to_string(),
            p.same_formula_rate.to_string(),
            p.same_ratio_rate.to_string(),
            p.same_elements_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_formula;
    use proptest::prelude::*;

    fn f(s: &str) -> Composition {
        parse_formula(s).unwrap()
    }

    fn failure(s: &str) -> Option<Rule> {
        first_failure(&f(s), &FilterConfig::default()).map(|(r, _)| r)
    }

    pub(crate) const REFERENCE_CANDIDATES: [&str; 10] = [
        "Li3B3H6",
        "Li1Al3H6",
        "Ti1H2",
        "Ti2H4",
        "K2Al3H6",
        "Ti6H8",
        "Ti3H4",
        "Ti5H6",
        "Ca2Al1Si2H3",
        "Ti4Ni1H4",
    ];

    #[test]
    fn unstable_sulfanes_rejected() {
        assert_eq!(failure("H6S"), Some(Rule::R1));
        assert!(failure("H2S2").is_some());
        assert_eq!(failure("KFH2"), Some(Rule::R9));
        assert_eq!(failure("NaClH"), Some(Rule::R9));
        assert_eq!(failure("NH3"), Some(Rule::R6));
        assert_eq!(failure("CH4"), Some(Rule::R7));
        assert_eq!(failure("B2Si"), Some(Rule::R8));
    }

    #[test]
    fn caps_per_class() {
        assert_eq!(failure("NaH3S"), None);
        // Na S: cap 2 + 2 = 4
        assert_eq!(failure("NaSH5"), Some(Rule::R1));
        // Li P: 2 + 3
        assert_eq!(failure("LiPH5"), None);
        assert_eq!(failure("LiPH6"), Some(Rule::R2));
        // Li Si: 2 + 4
        assert_eq!(failure("LiSiH6"), None);
        assert_eq!(failure("LiSiH7"), Some(Rule::R3));
        // Li B: 2 + (2 - 1)
        assert_eq!(failure("LiBH3"), None);
        assert_eq!(failure("LiBH4"), Some(Rule::R4));
    }

    #[test]
    fn metal_cap_is_optional() {
        let strict = FilterConfig {
            strict_metal_cap: true,
            ..FilterConfig::default()
        };
        assert_eq!(failure("TiH5"), None);
        assert_eq!(first_failure(&f("TiH5"), &strict).map(|r| r.0), Some(Rule::R5));
        assert_eq!(first_failure(&f("TiH2"), &strict), None);
    }

    #[test]
    fn element_count_rule() {
        let on = FilterConfig {
            require_element_count: true,
            ..FilterConfig::default()
        };
        assert_eq!(first_failure(&f("Ca2Al1Si2H3"), &on), None);
        assert_eq!(first_failure(&f("Ti1H2"), &on).map(|r| r.0), Some(Rule::R10));
        assert_eq!(failure("Ti1H2"), None);
    }

    #[test]
    fn reference_candidates_pass() {
        for s in REFERENCE_CANDIDATES {
            assert_eq!(failure(s), None, "{s}");
        }
    }

    #[test]
    fn verdict_fields() {
        let v = apply_filters(
            &[("a".into(), f("H6S")), ("b".into(), f("TiH2"))],
            &FilterConfig::default(),
        );
        assert!(!v[0].kept && v[0].failed_rule == Some(Rule::R1) && !v[0].detail.is_empty());
        assert!(v[1].kept && v[1].failed_rule.is_none() && v[1].detail.is_empty());
        let mut buf = Vec::new();
        write_verdicts_csv(&v, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,formula,kept,failed_rule,detail\n"));
        assert!(text.contains("b,TiH2,true,,\n"));
    }

    fn cand(id: &str, formula: &str, w: f64, score: f64) -> ScoredCandidate {
        ScoredCandidate {
            id: id.into(),
            formula: f(formula),
            e_form: -0.5,
            w_h2: w,
            score,
        }
    }

    #[test]
    fn rank_orders() {
        let items = [
            cand("1", "TiH2", 0.04, 0.01),
            cand("2", "MgH2", 0.07, 0.05),
            cand("3", "LiH", 0.1, 0.03),
        ];
        let ids: Vec<_> = rank(&items).into_iter().map(|c| c.id).collect();
        assert_eq!(ids, ["2", "3", "1"]);
        let same = [
            cand("a", "TiH2", 0.04, 0.02),
            cand("b", "TiH2", 0.04, 0.02),
            cand("c", "TiH2", 0.04, 0.02),
        ];
        let ids: Vec<_> = rank(&same).into_iter().map(|c| c.id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let tie = [
            cand("a", "TiH2", 0.04, 0.02),
            cand("b", "MgH2", 0.07, 0.02),
            cand("c", "CaH2", 0.07, 0.02),
        ];
        let ids: Vec<_> = rank(&tie).into_iter().map(|c| c.id).collect();
        assert_eq!(ids, ["c", "b", "a"]);
        let nan = [cand("a", "TiH2", 0.04, f64::NAN), cand("b", "MgH2", 0.07, -1.0)];
        assert_eq!(rank(&nan)[1].id, "a");
    }

    #[test]
    fn top_k_bounds() {
        let v: Vec<usize> = (0..1000).collect();
        assert_eq!(top_k(&v, 100).len(), 100);
        assert!(top_k(&v, 0).is_empty());
        assert_eq!(top_k(&v[..7], 100).len(), 7);
    }

    fn db() -> Vec<ReferenceEntry> {
        [
            ("mp-1077482", "TiH2"),
            ("mp-568523", "LiBH2"),
            ("mp-x", "KAlH4"),
            ("mp-dup", "TiH2"),
        ]
        .iter()
        .map(|(id, s)| ReferenceEntry {
            id: id.to_string(),
            formula: f(s),
        })
        .collect()
    }

    #[test]
    fn match_classes() {
        let db = db();
        let m = match_classify(&f("Ti1H2"), &db);
        assert_eq!(m.kind, MatchKind::SameFormula);
        assert_eq!(m.matched_id.as_deref(), Some("mp-1077482"));
        let m = match_classify(&f("Ti2H4"), &db);
        assert_eq!(m.kind, MatchKind::SameRatio);
        assert!(m.same_ratio() && !m.same_formula());
        assert_eq!(match_classify(&f("Li3B3H6"), &db).kind, MatchKind::SameRatio);
        assert_eq!(match_classify(&f("K2Al3H6"), &db).kind, MatchKind::SameElements);
        let m = match_classify(&f("MgH2"), &db);
        assert_eq!(
            m,
            MatchClass {
                kind: MatchKind::NoMatch,
                matched_id: None
            }
        );
    }

    #[test]
    fn accuracy_curves() {
        assert!(cumulative_accuracy(&[]).is_err());
        let all = cumulative_accuracy(&[MatchKind::SameFormula; 5]).unwrap();
        assert!(all
            .iter()
            .all(|p| p.same_formula_rate == 1.0 && p.same_ratio_rate == 1.0 && p.same_elements_rate == 1.0));
        let c = cumulative_accuracy(&[MatchKind::SameRatio, MatchKind::NoMatch]).unwrap();
        assert_eq!(c[1].same_ratio_rate, 0.5);
        assert_eq!(c[1].same_formula_rate, 0.0);
        let mut buf = Vec::new();
        write_curve_csv(&c, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,same_formula_rate,same_ratio_rate,same_elements_rate\n1,0,1,1\n2,0,0.5,0.5\n"
        );
    }

    fn formula_strategy() -> impl Strategy<Value = Composition> {
        let pool = [
            "H", "Li", "B", "C", "N", "O", "F", "Mg", "Al", "Si", "P", "S", "Cl", "K", "Ti", "Ni", "Se",
        ];
        prop::collection::vec((0..pool.len(), 1u32..7), 1..5).prop_map(move |v| {
            Composition::new(v.into_iter().map(|(i, n)| (Element::from_symbol(pool[i]).unwrap(), n))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn verdicts_independent_of_batch(cs in prop::collection::vec(formula_strategy(), 1..12), strict: bool, count: bool) {
            let config = FilterConfig { strict_metal_cap: strict, require_element_count: count };
            let items: Vec<(String, Composition)> = cs.iter().enumerate().map(|(i, c)| (i.to_string(), c.clone())).collect();
            let all = apply_filters(&items, &config);
            let mut rev = items.clone();
            rev.reverse();
            let mut back = apply_filters(&rev, &config);
            back.reverse();
            prop_assert_eq!(&all, &back);
            for (v, (id, c)) in all.iter().zip(&items) {
                prop_assert_eq!(v, &verdict(id, c, &config));
                prop_assert_eq!(v.kept, v.failed_rule.is_none());
            }
        }

        #[test]
        fn match_hierarchy(c in formula_strategy(), refs in prop::collection::vec(formula_strategy(), 0..8)) {
            let db: Vec<ReferenceEntry> = refs.into_iter().enumerate()
                .map(|(i, formula)| ReferenceEntry { id: format!("r{i}"), formula }).collect();
            let m = match_classify(&c, &db);
            prop_assert!(!m.same_formula() || m.same_ratio());
            prop_assert!(!m.same_ratio() || m.same_elements());
            prop_assert_eq!(m.kind == MatchKind::NoMatch, m.matched_id.is_none());
        }

        #[test]
        fn rank_is_a_permutation(scores in prop::collection::vec((0u8..5, 0u8..3), 0..30)) {
            let items: Vec<ScoredCandidate> = scores.iter().enumerate()
                .map(|(i, (s, w))| cand(&i.to_string(), "TiH2", *w as f64, *s as f64)).collect();
            let r = rank(&items);
            let mut a: Vec<_> = items.iter().map(|c| c.id.clone()).collect();
            let mut b: Vec<_> = r.iter().map(|c| c.id.clone()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            prop_assert!(r.windows(2).all(|w| w[0].score >= w[1].score));
        }

        #[test]
        fn curves_nested_and_counts_monotone(kinds in prop::collection::vec(0u8..4, 1..60)) {
            let ks: Vec<MatchKind> = kinds.iter().map(|k| [MatchKind::NoMatch, MatchKind::SameElements, MatchKind::SameRatio, MatchKind::SameFormula][*k as usize]).collect();
            let c = cumulative_accuracy(&ks).unwrap();
            let mut prev = [0.0f64; 3];
            for p in &c {
                prop_assert!(p.same_elements_rate >= p.same_ratio_rate && p.same_ratio_rate >= p.same_formula_rate);
                let n = p.n as f64;
                let now = [p.same_formula_rate * n, p.same_ratio_rate * n, p.same_elements_rate * n];
                for j in 0..3 {
                    prop_assert!(now[j] + 1e-9 >= prev[j]);
                }
                prev = now;
            }
        }
    }
}
