//! Constraint-based causal discovery: CI tests, PC skeleton, FCI orientation
//! and the partial ancestral graph it produces.

mod ci;
mod fci;
pub mod sem;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

pub use ci::{
    chi_square_ci, fisher_z_ci, partial_correlation, CategoricalTable, ChiSquareTest, CiTest, CiTestResult,
    FisherZTest, NumericTable, TestKind,
};
pub use fci::{
    fci, orient_v_structures, pc_skeleton, possible_d_sep, CiRecord, FciConfig, FciOutput, Phase, Skeleton, TestLog,
};

#[derive(Debug, thiserror::Error)]
pub enum CausalError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("malformed table: {0}")]
    Shape(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Endpoint mark of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Arrow,
    Tail,
    Circle,
}

impl Mark {
    fn left(self) -> char {
        match self {
            Mark::Arrow => '<',
            Mark::Tail => '-',
            Mark::Circle => 'o',
        }
    }

    fn right(self) -> char {
        match self {
            Mark::Arrow => '>',
            Mark::Tail => '-',
            Mark::Circle => 'o',
        }
    }

    fn parse(c: char) -> Option<Mark> {
        match c {
            '<' | '>' => Some(Mark::Arrow),
            '-' => Some(Mark::Tail),
            'o' => Some(Mark::Circle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub mark_a: Mark,
    pub mark_b: Mark,
}

/// Nodes, edges with a mark at each end, and the separating sets of removed pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAncestralGraph {
    nodes: Vec<String>,
    // marks[a][b] is the mark at b's end of the a-b edge.
    marks: Vec<Vec<Option<Mark>>>,
    sepsets: BTreeMap<(usize, usize), Vec<usize>>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl PartialAncestralGraph {
    pub fn empty(nodes: Vec<String>) -> Self {
        let n = nodes.len();
        PartialAncestralGraph {
            nodes,
            marks: vec![vec![None; n]; n],
            sepsets: BTreeMap::new(),
        }
    }

    /// Complete graph with circles at every endpoint.
    pub fn complete(nodes: Vec<String>) -> Self {
        let mut g = Self::empty(nodes);
        let n = g.nodes.len();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    g.marks[a][b] = Some(Mark::Circle);
                }
            }
        }
        g
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.marks[a][b].is_some()
    }

    pub fn adjacent(&self, a: usize) -> Vec<usize> {
        (0..self.len()).filter(|&b| self.marks[a][b].is_some()).collect()
    }

    /// Mark at `b`'s end of the edge between `a` and `b`.
    pub fn mark(&self, a: usize, b: usize) -> Option<Mark> {
        self.marks[a][b]
    }

    pub fn add_edge(&mut self, a: usize, b: usize, mark_a: Mark, mark_b: Mark) {
        assert_ne!(a, b, "self edge");
        self.marks[b][a] = Some(mark_a);
        self.marks[a][b] = Some(mark_b);
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.marks[a][b] = None;
        self.marks[b][a] = None;
    }

    /// Overwrite the mark at `b`'s end. The edge must exist.
    pub fn set_mark(&mut self, a: usize, b: usize, mark: Mark) {
        assert!(self.marks[a][b].is_some(), "no edge {a}-{b}");
        self.marks[a][b] = Some(mark);
    }

    pub fn edges(&self) -> Vec<Edge> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if let Some(mark_b) = self.marks[a][b] {
                    out.push(Edge {
                        a,
                        b,
                        mark_a: self.marks[b][a].expect("symmetric adjacency"),
                        mark_b,
                    });
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn sepset(&self, a: usize, b: usize) -> Option<&[usize]> {
        self.sepsets.get(&key(a, b)).map(Vec::as_slice)
    }

    pub fn set_sepset(&mut self, a: usize, b: usize, z: Vec<usize>) {
        self.sepsets.insert(key(a, b), z);
    }

    pub fn sepsets(&self) -> &BTreeMap<(usize, usize), Vec<usize>> {
        &self.sepsets
    }

    /// `a --> b`: tail at a, arrowhead at b.
    pub fn is_directed(&self, a: usize, b: usize) -> bool {
        self.marks[a][b] == Some(Mark::Arrow) && self.marks[b][a] == Some(Mark::Tail)
    }

    /// Is there a directed path `from --> ... --> to`?
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for w in 0..self.len() {
                if !seen[w] && self.is_directed(v, w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }

    pub fn has_directed_cycle(&self) -> bool {
        self.edges().iter().any(|e| {
            (self.is_directed(e.a, e.b) && self.has_directed_path(e.b, e.a))
                || (self.is_directed(e.b, e.a) && self.has_directed_path(e.a, e.b))
        })
    }

    /// Text form: `node <name>` lines, then `A o-> B` edge lines, then
    /// `sepset i j : k l` lines over node indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {n}\n"));
        }
        for e in self.edges() {
            out.push_str(&format!(
                "{} {}-{} {}\n",
                self.nodes[e.a],
                e.mark_a.left(),
                e.mark_b.right(),
                self.nodes[e.b]
            ));
        }
        for ((a, b), z) in &self.sepsets {
            let z: Vec<String> = z.iter().map(usize::to_string).collect();
            out.push_str(&format!("sepset {a} {b} : {}\n", z.join(" ")).replace(" \n", "\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CausalError> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut seps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |msg: &str| CausalError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            if let Some(name) = line.strip_prefix("node ") {
                if name.is_empty() {
                    return Err(err("empty node name"));
                }
                nodes.push(name.to_string());
            } else if let Some(rest) = line.strip_prefix("sepset ") {
                let (pair, z) = rest.split_once(':').ok_or_else(|| err("sepset needs ':'"))?;
                let parse_all = |s: &str| -> Result<Vec<usize>, CausalError> {
                    s.split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|_| err("bad node index")))
                        .collect()
                };
                let pair = parse_all(pair)?;
                if pair.len() != 2 {
                    return Err(err("sepset needs two node indices"));
                }
                seps.push((line_no, pair[0], pair[1], parse_all(z)?));
            } else {
                edges.push((line_no, line.to_string()));
            }
        }
        if nodes.is_empty() {
            // Edge-list only: nodes in order of first appearance.
            for (line_no, line) in &edges {
                let (a, _, _, b) = split_edge(line, None).ok_or(CausalError::Parse {
                    line: *line_no,
                    msg: "expected `A <mark>-<mark> B`".into(),
                })?;
                for name in [a, b] {
                    if !nodes.contains(&name) {
                        nodes.push(name);
                    }
                }
            }
        }
        let mut g = PartialAncestralGraph::empty(nodes);
        for (line_no, line) in edges {
            let err = |msg: String| CausalError::Parse { line: line_no, msg };
            let (a, ma, mb, b) = split_edge(&line, Some(&g.nodes))
                .ok_or_else(|| err("expected `A <mark>-<mark> B` over declared nodes".into()))?;
            let ia = g.index_of(&a).ok_or_else(|| err(format!("unknown node {a:?}")))?;
            let ib = g.index_of(&b).ok_or_else(|| err(format!("unknown node {b:?}")))?;
            if ia == ib {
                return Err(err("self edge".into()));
            }
            if g.is_adjacent(ia, ib) {
                return Err(err("duplicate edge".into()));
            }
            g.add_edge(ia, ib, ma, mb);
        }
        for (line_no, a, b, z) in seps {
            let n = g.len();
            if a >= n || b >= n || a == b || z.iter().any(|&v| v >= n) {
                return Err(CausalError::Parse {
                    line: line_no,
                    msg: "sepset index out of range".into(),
                });
            }
            g.set_sepset(a, b, z);
        }
        Ok(g)
    }
}

// Split `A xyz B` at the first mark token whose two sides are known names
// (or any nonempty names when `known` is None).
fn split_edge(line: &str, known: Option<&[String]>) -> Option<(String, Mark, Mark, String)> {
    let bytes = line.as_bytes();
    for start in 1..line.len().saturating_sub(4) {
        if bytes[start - 1] != b' ' || bytes.get(start + 3) != Some(&b' ') || bytes[start + 1] != b'-' {
            continue;
        }
        let (Some(ma), Some(mb)) = (Mark::parse(bytes[start] as char), Mark::parse(bytes[start + 2] as char)) else {
            continue;
        };
        if bytes[start + 2] == b'<' {
            continue;
        }
        let a = &line[..start - 1];
        let b = &line[start + 4..];
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let ok = known.is_none_or(|names| names.iter().any(|n| n == a) && names.iter().any(|n| n == b));
        if ok {
            return Some((a.to_string(), ma, mb, b.to_string()));
        }
    }
    None
}

impl fmt::Display for PartialAncestralGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// How a neighbor relates to the target, read off the endpoint pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// neighbor --> target
    Cause,
    /// target --> neighbor
    Effect,
    /// neighbor <-> target: association through a latent confounder
    Bidirected,
    /// neighbor o-> target
    PossibleCause,
    /// target o-> neighbor
    PossibleEffect,
    /// o-o and remaining combinations
    Undetermined,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Cause => "cause",
            Relation::Effect => "effect",
            Relation::Bidirected => "bidirected",
            Relation::PossibleCause => "possible-cause",
            Relation::PossibleEffect => "possible-effect",
            Relation::Undetermined => "undetermined",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub name: String,
    /// Graph distance from the target.
    pub distance: usize,
    /// The node through which this one was reached (the target at distance 1).
    pub via: usize,
    /// Marks on the via-neighbor edge, at the via end and at this node's end.
    pub mark_at_via: Mark,
    pub mark_at_node: Mark,
    pub relation: Relation,
}

fn relation(at_via: Mark, at_node: Mark) -> Relation {
    match (at_via, at_node) {
        (Mark::Arrow, Mark::Tail) => Relation::Cause,
        (Mark::Tail, Mark::Arrow) => Relation::Effect,
        (Mark::Arrow, Mark::Arrow) => Relation::Bidirected,
        (Mark::Arrow, Mark::Circle) => Relation::PossibleCause,
        (Mark::Circle, Mark::Arrow) => Relation::PossibleEffect,
        _ => Relation::Undetermined,
    }
}

/// Nodes within `radius` hops of `target` in breadth-first order, each
/// annotated with the edge that reached it.
pub fn neighborhood(pag: &PartialAncestralGraph, target: &str, radius: usize) -> Result<Vec<Neighbor>, CausalError> {
    let t = pag
        .index_of(target)
        .ok_or_else(|| CausalError::UnknownNode(target.to_string()))?;
    let mut dist = vec![usize::MAX; pag.len()];
    dist[t] = 0;
    let mut queue = VecDeque::from([t]);
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        if dist[v] == radius {
            continue;
        }
        for w in pag.adjacent(v) {
            if dist[w] != usize::MAX {
                continue;
            }
            dist[w] = dist[v] + 1;
            let mark_at_via = pag.mark(w, v).expect("adjacent");
            let mark_at_node = pag.mark(v, w).expect("adjacent");
            out.push(Neighbor {
                index: w,
                name: pag.nodes[w].clone(),
                distance: dist[w],
                via: v,
                mark_at_via,
                mark_at_node,
                relation: relation(mark_at_via, mark_at_node),
            });
            queue.push_back(w);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn text_round_trip_with_spaces_and_sepsets() {
        let mut g = PartialAncestralGraph::empty(names(&["H Storage Score", "Band Gap", "W H2", "lone"]));
        g.add_edge(0, 1, Mark::Tail, Mark::Arrow);
        g.add_edge(2, 0, Mark::Circle, Mark::Arrow);
        g.add_edge(1, 2, Mark::Arrow, Mark::Arrow);
        g.set_sepset(0, 3, vec![]);
        g.set_sepset(1, 3, vec![0, 2]);
        let text = g.to_text();
        assert!(text.contains("H Storage Score --> Band Gap\n"));
        assert!(text.contains("H Storage Score <-o W H2\n"));
        assert!(text.contains("Band Gap <-> W H2\n"));
        assert!(text.contains("sepset 0 3 :\n"));
        let back = PartialAncestralGraph::from_text(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn accepts_right_angle_left_mark_and_bare_edge_lists() {
        let g = PartialAncestralGraph::from_text("A >-> B\nB o-o C\n").unwrap();
        assert_eq!(g.nodes(), names(&["A", "B", "C"]).as_slice());
        assert_eq!(g.mark(1, 0), Some(Mark::Arrow));
        assert_eq!(g.mark(0, 1), Some(Mark::Arrow));
        assert_eq!(g.mark(2, 1), Some(Mark::Circle));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(PartialAncestralGraph::from_text("node A\nnode B\nA x-> B\n").is_err());
        assert!(PartialAncestralGraph::from_text("node A\nA --> A\n").is_err());
        assert!(PartialAncestralGraph::from_text("node A\nnode B\nA --> B\nB --> A\n").is_err());
        assert!(PartialAncestralGraph::from_text("node A\nnode B\nsepset 0 5 :\n").is_err());
    }

    #[test]
    fn directed_cycle_detection() {
        let mut g = PartialAncestralGraph::empty(names(&["a", "b", "c"]));
        g.add_edge(0, 1, Mark::Tail, Mark::Arrow);
        g.add_edge(1, 2, Mark::Tail, Mark::Arrow);
        assert!(!g.has_directed_cycle());
        g.add_edge(2, 0, Mark::Tail, Mark::Arrow);
        assert!(g.has_directed_cycle());
        g.set_mark(0, 2, Mark::Arrow);
        assert!(!g.has_directed_cycle());
    }

    #[test]
    fn neighborhood_of_star_and_isolated_nodes() {
        let mut g = PartialAncestralGraph::empty(names(&["hub", "a", "b", "c", "iso"]));
        g.add_edge(1, 0, Mark::Tail, Mark::Arrow);
        g.add_edge(0, 2, Mark::Tail, Mark::Arrow);
        g.add_edge(0, 3, Mark::Arrow, Mark::Arrow);
        let nb = neighborhood(&g, "hub", 1).unwrap();
        let rel: Vec<(&str, Relation)> = nb.iter().map(|n| (n.name.as_str(), n.relation)).collect();
        assert_eq!(
            rel,
            vec![
                ("a", Relation::Cause),
                ("b", Relation::Effect),
                ("c", Relation::Bidirected)
            ]
        );
        assert!(neighborhood(&g, "iso", 1).unwrap().is_empty());
        assert!(neighborhood(&g, "missing", 1).is_err());
        let two = neighborhood(&g, "a", 2).unwrap();
        assert_eq!(two.len(), 3);
        assert_eq!(two[1].distance, 2);
        assert_eq!(two[1].via, 0);
    }
}
