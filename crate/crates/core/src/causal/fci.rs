use std::collections::{BTreeSet, HashSet, VecDeque};

use rayon::prelude::*;

use super::{CiTest, Mark, PartialAncestralGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Skeleton,
    PossibleDSep,
}

/// One CI query as it was issued.
#[derive(Debug, Clone, PartialEq)]
pub struct CiRecord {
    pub phase: Phase,
    pub x: usize,
    pub y: usize,
    pub z: Vec<usize>,
    pub p_value: f64,
    pub independent: bool,
    pub untestable: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestLog {
    pub records: Vec<CiRecord>,
}

impl TestLog {
    /// Pairs that some logged test declared independent.
    pub fn removed_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.replay(|r| r.independent)
    }

    /// Pairs that would be removed had the same query sequence been judged at
    /// `alpha` instead.
    pub fn replay_at(&self, alpha: f64) -> BTreeSet<(usize, usize)> {
        self.replay(|r| r.untestable || r.p_value > alpha)
    }

    fn replay(&self, removes: impl Fn(&CiRecord) -> bool) -> BTreeSet<(usize, usize)> {
        self.records
            .iter()
            .filter(|r| removes(r))
            .map(|r| (r.x.min(r.y), r.x.max(r.y)))
            .collect()
    }

    pub fn untestable_count(&self) -> usize {
        self.records.iter().filter(|r| r.untestable).count()
    }
}

#[derive(Debug, Clone)]
pub struct FciConfig {
    /// Largest conditioning-set size tried, in both the skeleton and the
    /// possible-d-sep phase.
    pub max_depth: Option<usize>,
    pub possible_dsep: bool,
    pub parallel: bool,
}

impl Default for FciConfig {
    fn default() -> Self {
        FciConfig {
            max_depth: None,
            possible_dsep: true,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    /// Circle-marked undirected graph with sepsets of removed pairs.
    pub graph: PartialAncestralGraph,
    pub log: TestLog,
}

#[derive(Debug, Clone)]
pub struct FciOutput {
    pub pag: PartialAncestralGraph,
    pub log: TestLog,
    pub warnings: Vec<String>,
}

/// k-subsets of `items` in lexicographic order.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn record(test: &dyn CiTest, phase: Phase, x: usize, y: usize, z: Vec<usize>) -> CiRecord {
    let r = test.test(x, y, &z);
    CiRecord {
        phase,
        x,
        y,
        z,
        p_value: r.p_value,
        independent: r.independent,
        untestable: r.untestable,
    }
}

// Try every depth-sized subset of adj(x)\{y}, then of adj(y)\{x}, stopping at
// the first independence.
fn search_pair(
    test: &dyn CiTest,
    adj: &[Vec<usize>],
    x: usize,
    y: usize,
    depth: usize,
) -> (Vec<CiRecord>, Option<Vec<usize>>) {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (a, b) in [(x, y), (y, x)] {
        let pool: Vec<usize> = adj[a].iter().copied().filter(|&v| v != b).collect();
        for z in combinations(&pool, depth) {
            if !seen.insert(z.clone()) {
                continue;
            }
            let r = record(test, Phase::Skeleton, x, y, z.clone());
            let independent = r.independent;
            records.push(r);
            if independent {
                return (records, Some(z));
            }
        }
    }
    (records, None)
}

/// Skeleton search from the complete graph. Adjacencies are frozen at the
/// start of each depth, so the result does not depend on pair order within
/// a depth and the pairs can be searched in parallel.
pub fn pc_skeleton(test: &dyn CiTest, config: &FciConfig) -> Skeleton {
    let names = test.names().to_vec();
    let n = names.len();
    let mut g = PartialAncestralGraph::complete(names);
    let mut log = TestLog::default();
    for depth in 0.. {
        if config.max_depth.is_some_and(|m| depth > m) {
            break;
        }
        let adj: Vec<Vec<usize>> = (0..n).map(|v| g.adjacent(v)).collect();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
            .filter(|&(x, y)| g.is_adjacent(x, y) && (adj[x].len() > depth || adj[y].len() > depth))
            .collect();
        if pairs.is_empty() {
            break;
        }
        let run = |&(x, y): &(usize, usize)| (x, y, search_pair(test, &adj, x, y, depth));
        let results: Vec<_> = if config.parallel {
            pairs.par_iter().map(run).collect()
        } else {
            pairs.iter().map(run).collect()
        };
        for (x, y, (records, sepset)) in results {
            log.records.extend(records);
            if let Some(z) = sepset {
                g.remove_edge(x, y);
                g.set_sepset(x, y, z);
            }
        }
    }
    let untestable = log.untestable_count();
    if untestable > 0 {
        log::info!("{untestable} untestable CI queries treated as independent");
    }
    Skeleton { graph: g, log }
}

struct Orienter<'a> {
    g: &'a mut PartialAncestralGraph,
    warnings: &'a mut Vec<String>,
}

impl Orienter<'_> {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn name(&self, v: usize) -> &str {
        &self.g.nodes()[v]
    }

    /// Put `mark` at b's end of a-b. Only circles are overwritten; anything
    /// else keeps its first orientation.
    fn put(&mut self, a: usize, b: usize, mark: Mark) -> bool {
        let current = self.g.mark(a, b).expect("edge exists");
        if current == mark {
            return false;
        }
        if current != Mark::Circle {
            let msg = format!(
                "conflicting orientation at {} on {} - {} ignored",
                self.name(b),
                self.name(a),
                self.name(b)
            );
            self.warn(msg);
            return false;
        }
        self.g.set_mark(a, b, mark);
        let cycle = (self.g.is_directed(a, b) && self.g.has_directed_path(b, a))
            || (self.g.is_directed(b, a) && self.g.has_directed_path(a, b));
        if cycle {
            self.g.set_mark(a, b, current);
            let msg = format!(
                "orientation of {} - {} skipped: it would close a directed cycle",
                self.name(a),
                self.name(b)
            );
            self.warn(msg);
            return false;
        }
        true
    }

    /// a --> b. Refused when either end already carries a conflicting mark
    /// or when b already reaches a along a directed path.
    fn direct(&mut self, a: usize, b: usize) -> bool {
        let at_a = self.g.mark(b, a).expect("edge exists");
        let at_b = self.g.mark(a, b).expect("edge exists");
        if at_a == Mark::Tail && at_b == Mark::Arrow {
            return false;
        }
        if at_a == Mark::Arrow || at_b == Mark::Tail {
            let msg = format!("conflicting orientation {} --> {} ignored", self.name(a), self.name(b));
            self.warn(msg);
            return false;
        }
        if self.g.has_directed_path(b, a) {
            let msg = format!(
                "orientation {} --> {} skipped: it would close a directed cycle",
                self.name(a),
                self.name(b)
            );
            self.warn(msg);
            return false;
        }
        self.g.set_mark(b, a, Mark::Tail);
        self.g.set_mark(a, b, Mark::Arrow);
        true
    }
}

/// Arrowheads at z for every unshielded x *-* z *-* y with z outside sepset(x, y).
pub fn orient_v_structures(g: &mut PartialAncestralGraph, warnings: &mut Vec<String>) {
    let n = g.len();
    let mut triples = Vec::new();
    for z in 0..n {
        let adj = g.adjacent(z);
        for (i, &x) in adj.iter().enumerate() {
            for &y in &adj[i + 1..] {
                if g.is_adjacent(x, y) {
                    continue;
                }
                let separated_by_z = g.sepset(x, y).is_some_and(|s| s.contains(&z));
                if !separated_by_z {
                    triples.push((x, z, y));
                }
            }
        }
    }
    let mut o = Orienter { g, warnings };
    for (x, z, y) in triples {
        o.put(x, z, Mark::Arrow);
        o.put(y, z, Mark::Arrow);
    }
}

/// Nodes reachable from `x` along paths on which every interior node is a
/// collider or sits in a triangle with its path neighbors.
pub fn possible_d_sep(g: &PartialAncestralGraph, x: usize) -> Vec<usize> {
    let n = g.len();
    let mut in_set = vec![false; n];
    let mut visited = HashSet::new();
    let mut queue = VecDeque::new();
    for v in g.adjacent(x) {
        in_set[v] = true;
        visited.insert((x, v));
        queue.push_back((x, v));
    }
    while let Some((a, b)) = queue.pop_front() {
        for c in g.adjacent(b) {
            if c == a || c == x {
                continue;
            }
            let collider = g.mark(a, b) == Some(Mark::Arrow) && g.mark(c, b) == Some(Mark::Arrow);
            if (collider || g.is_adjacent(a, c)) && visited.insert((b, c)) {
                in_set[c] = true;
                queue.push_back((b, c));
            }
        }
    }
    (0..n).filter(|&v| in_set[v]).collect()
}

fn possible_d_sep_phase(test: &dyn CiTest, g: &mut PartialAncestralGraph, config: &FciConfig, log: &mut TestLog) {
    let tested: HashSet<(usize, usize, Vec<usize>)> = log.records.iter().map(|r| (r.x, r.y, r.z.clone())).collect();
    let n = g.len();
    for x in 0..n {
        for y in x + 1..n {
            if !g.is_adjacent(x, y) {
                continue;
            }
            'pair: for side in [x, y] {
                let pool: Vec<usize> = possible_d_sep(g, side)
                    .into_iter()
                    .filter(|&v| v != x && v != y)
                    .collect();
                let top = config.max_depth.map_or(pool.len(), |m| m.min(pool.len()));
                for depth in 1..=top {
                    for z in combinations(&pool, depth) {
                        if tested.contains(&(x, y, z.clone())) {
                            continue;
                        }
                        let r = record(test, Phase::PossibleDSep, x, y, z.clone());
                        let independent = r.independent;
                        log.records.push(r);
                        if independent {
                            g.remove_edge(x, y);
                            g.set_sepset(x, y, z);
                            break 'pair;
                        }
                    }
                }
            }
        }
    }
}

fn reset_to_circles(g: &mut PartialAncestralGraph) {
    for e in g.edges() {
        g.set_mark(e.a, e.b, Mark::Circle);
        g.set_mark(e.b, e.a, Mark::Circle);
    }
}

fn rule1(o: &mut Orienter) -> bool {
    let n = o.g.len();
    let mut changed = false;
    for beta in 0..n {
        for alpha in o.g.adjacent(beta) {
            if o.g.mark(alpha, beta) != Some(Mark::Arrow) {
                continue;
            }
            for gamma in o.g.adjacent(beta) {
                if gamma == alpha || o.g.is_adjacent(alpha, gamma) {
                    continue;
                }
                if o.g.mark(gamma, beta) == Some(Mark::Circle) && o.g.mark(alpha, beta) == Some(Mark::Arrow) {
                    changed |= o.direct(beta, gamma);
                }
            }
        }
    }
    changed
}

fn rule2(o: &mut Orienter) -> bool {
    let n = o.g.len();
    let mut changed = false;
    for alpha in 0..n {
        for gamma in o.g.adjacent(alpha) {
            if o.g.mark(alpha, gamma) != Some(Mark::Circle) {
                continue;
            }
            let fires = o.g.adjacent(alpha).into_iter().any(|beta| {
                beta != gamma
                    && o.g.is_adjacent(beta, gamma)
                    && ((o.g.is_directed(alpha, beta) && o.g.mark(beta, gamma) == Some(Mark::Arrow))
                        || (o.g.mark(alpha, beta) == Some(Mark::Arrow) && o.g.is_directed(beta, gamma)))
            });
            if fires {
                changed |= o.put(alpha, gamma, Mark::Arrow);
            }
        }
    }
    changed
}

fn rule3(o: &mut Orienter) -> bool {
    let n = o.g.len();
    let mut changed = false;
    for beta in 0..n {
        let adj = o.g.adjacent(beta);
        for (i, &alpha) in adj.iter().enumerate() {
            for &gamma in &adj[i + 1..] {
                if o.g.is_adjacent(alpha, gamma)
                    || o.g.mark(alpha, beta) != Some(Mark::Arrow)
                    || o.g.mark(gamma, beta) != Some(Mark::Arrow)
                {
                    continue;
                }
                for &theta in &adj {
                    if theta == alpha || theta == gamma {
                        continue;
                    }
                    if o.g.is_adjacent(alpha, theta)
                        && o.g.is_adjacent(gamma, theta)
                        && o.g.mark(alpha, theta) == Some(Mark::Circle)
                        && o.g.mark(gamma, theta) == Some(Mark::Circle)
                        && o.g.mark(theta, beta) == Some(Mark::Circle)
                    {
                        changed |= o.put(theta, beta, Mark::Arrow);
                    }
                }
            }
        }
    }
    changed
}

// Shortest discriminating path <theta, ..., alpha, beta, gamma> for beta, if any.
fn discriminating_theta(g: &PartialAncestralGraph, alpha: usize, beta: usize, gamma: usize) -> Option<usize> {
    let n = g.len();
    let mut seen = vec![false; n];
    seen[alpha] = true;
    seen[beta] = true;
    seen[gamma] = true;
    let mut queue = VecDeque::from([alpha]);
    while let Some(v) = queue.pop_front() {
        for w in g.adjacent(v) {
            if seen[w] || g.mark(w, v) != Some(Mark::Arrow) {
                continue;
            }
            if !g.is_adjacent(w, gamma) {
                return Some(w);
            }
            // w becomes an interior collider: arrowhead from v and a parent of gamma.
            if g.mark(v, w) == Some(Mark::Arrow) && g.is_directed(w, gamma) {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    None
}

fn rule4(o: &mut Orienter) -> bool {
    let n = o.g.len();
    let mut changed = false;
    for gamma in 0..n {
        for beta in o.g.adjacent(gamma) {
            if o.g.mark(gamma, beta) != Some(Mark::Circle) {
                continue;
            }
            for alpha in o.g.adjacent(beta) {
                if alpha == gamma
                    || !o.g.is_adjacent(alpha, gamma)
                    || o.g.mark(beta, alpha) != Some(Mark::Arrow)
                    || !o.g.is_directed(alpha, gamma)
                {
                    continue;
                }
                let Some(theta) = discriminating_theta(o.g, alpha, beta, gamma) else {
                    continue;
                };
                let in_sepset = o.g.sepset(theta, gamma).is_some_and(|s| s.contains(&beta));
                if in_sepset {
                    changed |= o.direct(beta, gamma);
                } else {
                    changed |= o.put(alpha, beta, Mark::Arrow);
                    changed |= o.put(gamma, beta, Mark::Arrow);
                    changed |= o.put(beta, gamma, Mark::Arrow);
                }
                break;
            }
        }
    }
    changed
}

/// FCI: skeleton, possible-d-sep refinement, colliders, then rules R1-R4 to a
/// fixed point.
pub fn fci(test: &dyn CiTest, config: &FciConfig) -> FciOutput {
    let mut warnings = Vec::new();
    if test.n_vars() < 2 {
        return FciOutput {
            pag: PartialAncestralGraph::empty(test.names().to_vec()),
            log: TestLog::default(),
            warnings,
        };
    }
    let Skeleton { graph: mut g, mut log } = pc_skeleton(test, config);
    orient_v_structures(&mut g, &mut warnings);
    if config.possible_dsep {
        possible_d_sep_phase(test, &mut g, config, &mut log);
        reset_to_circles(&mut g);
        // Warnings from the provisional orientation are superseded.
        warnings.clear();
        orient_v_structures(&mut g, &mut warnings);
    }
    let mut o = Orienter {
        g: &mut g,
        warnings: &mut warnings,
    };
    loop {
        let mut changed = rule1(&mut o);
        changed |= rule2(&mut o);
        changed |= rule3(&mut o);
        changed |= rule4(&mut o);
        if !changed {
            break;
        }
    }
    FciOutput { pag: g, log, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::sem::LinearSem;
    use crate::causal::{FisherZTest, NumericTable};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn fisher(sem: &LinearSem, n: usize, seed: u64, alpha: f64) -> FisherZTest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = sem.sample(n, &mut rng);
        FisherZTest::new(NumericTable::new(sem.names(), &cols).unwrap(), alpha).unwrap()
    }

    #[test]
    fn lexicographic_combinations() {
        assert_eq!(
            combinations(&[1, 3, 5, 7], 2),
            vec![vec![1, 3], vec![1, 5], vec![1, 7], vec![3, 5], vec![3, 7], vec![5, 7]]
        );
        assert_eq!(combinations(&[4, 2], 0), vec![Vec::<usize>::new()]);
        assert!(combinations(&[1], 2).is_empty());
    }

    #[test]
    fn chain_skeleton_and_sepset() {
        let sem = LinearSem::new(3, vec![(0, 1, 0.8), (1, 2, 0.8)]);
        let t = fisher(&sem, 10_000, 7, 0.05);
        let s = pc_skeleton(&t, &FciConfig::default());
        assert!(s.graph.is_adjacent(0, 1) && s.graph.is_adjacent(1, 2));
        assert!(!s.graph.is_adjacent(0, 2));
        assert_eq!(s.graph.sepset(0, 2), Some(&[1usize][..]));
        let out = fci(&t, &FciConfig::default());
        for e in out.pag.edges() {
            assert_eq!((e.mark_a, e.mark_b), (Mark::Circle, Mark::Circle));
        }
    }

    #[test]
    fn collider_is_oriented() {
        let sem = LinearSem::new(3, vec![(0, 2, 0.8), (1, 2, 0.8)]);
        let out = fci(&fisher(&sem, 10_000, 11, 0.05), &FciConfig::default());
        let g = &out.pag;
        assert!(!g.is_adjacent(0, 1));
        assert_eq!(g.mark(0, 2), Some(Mark::Arrow));
        assert_eq!(g.mark(1, 2), Some(Mark::Arrow));
        assert_eq!(g.mark(2, 0), Some(Mark::Circle));
        assert_eq!(g.mark(2, 1), Some(Mark::Circle));
        assert!(out.pag.to_text().contains("x0 o-> x2"));
    }

    #[test]
    fn fork_has_no_collider() {
        let sem = LinearSem::new(3, vec![(2, 0, 0.8), (2, 1, 0.8)]);
        let out = fci(&fisher(&sem, 10_000, 13, 0.05), &FciConfig::default());
        assert!(!out.pag.is_adjacent(0, 1));
        assert!(out
            .pag
            .edges()
            .iter()
            .all(|e| e.mark_a == Mark::Circle && e.mark_b == Mark::Circle));
    }

    #[test]
    fn rule1_propagates_away_from_collider() {
        // a -> c <- b, c -> d: d gets a tail at c.
        let sem = LinearSem::new(4, vec![(0, 2, 0.8), (1, 2, 0.8), (2, 3, 0.8)]);
        let out = fci(&fisher(&sem, 10_000, 17, 0.05), &FciConfig::default());
        assert!(out.pag.is_directed(2, 3), "{}", out.pag);
    }

    #[test]
    fn independent_pair_gives_empty_skeleton() {
        let sem = LinearSem::new(2, vec![]);
        let mut found = 0;
        for seed in 0..20 {
            let s = pc_skeleton(&fisher(&sem, 10_000, seed, 0.05), &FciConfig::default());
            found += s.graph.edge_count();
            assert_eq!(s.graph.sepset(0, 1).is_some(), s.graph.edge_count() == 0);
        }
        assert!(found <= 3);
    }

    #[test]
    fn single_variable_graph() {
        let t = FisherZTest::new(
            NumericTable::new(names(&["only"]), &[vec![1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap(),
            0.05,
        )
        .unwrap();
        let out = fci(&t, &FciConfig::default());
        assert_eq!(out.pag.len(), 1);
        assert_eq!(out.pag.edge_count(), 0);
    }

    #[test]
    fn hand_built_rule_cases() {
        // R2: a --> b o-> c and a o-o c -> arrowhead at c on a - c.
        let mut g = PartialAncestralGraph::empty(names(&["a", "b", "c"]));
        g.add_edge(0, 1, Mark::Tail, Mark::Arrow);
        g.add_edge(1, 2, Mark::Circle, Mark::Arrow);
        g.add_edge(0, 2, Mark::Circle, Mark::Circle);
        let mut w = Vec::new();
        assert!(rule2(&mut Orienter {
            g: &mut g,
            warnings: &mut w
        }));
        assert_eq!(g.mark(0, 2), Some(Mark::Arrow));

        // R3: a *-> b <-* c, a *-o d o-* c, d *-o b, a and c non-adjacent.
        let mut g = PartialAncestralGraph::empty(names(&["a", "b", "c", "d"]));
        g.add_edge(0, 1, Mark::Circle, Mark::Arrow);
        g.add_edge(2, 1, Mark::Circle, Mark::Arrow);
        g.add_edge(0, 3, Mark::Circle, Mark::Circle);
        g.add_edge(2, 3, Mark::Circle, Mark::Circle);
        g.add_edge(3, 1, Mark::Circle, Mark::Circle);
        assert!(rule3(&mut Orienter {
            g: &mut g,
            warnings: &mut w
        }));
        assert_eq!(g.mark(3, 1), Some(Mark::Arrow));

        // R4: theta *-> a <-> b o-* gamma with a --> gamma, theta not adjacent to gamma.
        let build = |sep: Vec<usize>| {
            let mut g = PartialAncestralGraph::empty(names(&["theta", "a", "b", "gamma"]));
            g.add_edge(0, 1, Mark::Circle, Mark::Arrow);
            g.add_edge(1, 2, Mark::Arrow, Mark::Arrow);
            g.add_edge(2, 3, Mark::Circle, Mark::Circle);
            g.add_edge(1, 3, Mark::Tail, Mark::Arrow);
            g.set_sepset(0, 3, sep);
            g
        };
        let mut g = build(vec![1, 2]);
        assert!(rule4(&mut Orienter {
            g: &mut g,
            warnings: &mut w
        }));
        assert!(g.is_directed(2, 3));
        let mut g = build(vec![1]);
        assert!(rule4(&mut Orienter {
            g: &mut g,
            warnings: &mut w
        }));
        assert_eq!(g.mark(1, 2), Some(Mark::Arrow));
        assert_eq!(g.mark(2, 1), Some(Mark::Arrow));
        assert_eq!(g.mark(3, 2), Some(Mark::Arrow));
        assert_eq!(g.mark(2, 3), Some(Mark::Arrow));
        assert!(w.is_empty(), "{w:?}");
    }

    #[test]
    fn conflicting_marks_keep_first_orientation() {
        let mut g = PartialAncestralGraph::empty(names(&["a", "b"]));
        g.add_edge(0, 1, Mark::Tail, Mark::Arrow);
        let mut w = Vec::new();
        let mut o = Orienter {
            g: &mut g,
            warnings: &mut w,
        };
        assert!(!o.put(1, 0, Mark::Arrow));
        assert!(g.is_directed(0, 1));
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn direct_refuses_cycles() {
        let mut g = PartialAncestralGraph::empty(names(&["a", "b", "c"]));
        g.add_edge(0, 1, Mark::Tail, Mark::Arrow);
        g.add_edge(1, 2, Mark::Tail, Mark::Arrow);
        g.add_edge(2, 0, Mark::Circle, Mark::Circle);
        let mut w = Vec::new();
        let mut o = Orienter {
            g: &mut g,
            warnings: &mut w,
        };
        assert!(!o.direct(2, 0));
        assert!(!g.has_directed_cycle());
        assert_eq!(g.mark(2, 0), Some(Mark::Circle));
        assert_eq!(g.mark(0, 2), Some(Mark::Circle));
    }

    #[test]
    fn possible_d_sep_follows_colliders() {
        // a *-> b <-* c, c - d: PDS(a) reaches c through the collider only.
        let mut g = PartialAncestralGraph::empty(names(&["a", "b", "c", "d"]));
        g.add_edge(0, 1, Mark::Circle, Mark::Arrow);
        g.add_edge(2, 1, Mark::Circle, Mark::Arrow);
        g.add_edge(2, 3, Mark::Circle, Mark::Circle);
        assert_eq!(possible_d_sep(&g, 0), vec![1, 2]);
        assert_eq!(possible_d_sep(&g, 3), vec![2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fci_output_is_acyclic_and_consistent(seed in any::<u64>(), p in 0.2f64..0.8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sem = LinearSem::random(5, p, &mut rng);
            let t = fisher(&sem, 500, seed ^ 0x5eed, 0.05);
            let out = fci(&t, &FciConfig::default());
            prop_assert!(!out.pag.has_directed_cycle());
            for a in 0..5 {
                prop_assert!(!out.pag.is_adjacent(a, a));
                for b in a + 1..5 {
                    prop_assert_eq!(out.pag.is_adjacent(a, b), !out.pag.sepsets().contains_key(&(a, b)));
                }
            }
            let back = PartialAncestralGraph::from_text(&out.pag.to_text()).unwrap();
            prop_assert_eq!(back, out.pag);
        }

        #[test]
        fn smaller_alpha_never_removes_fewer_edges(seed in any::<u64>(), small in 0.001f64..0.05) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sem = LinearSem::random(5, 0.5, &mut rng);
            let t = fisher(&sem, 300, seed, 0.05);
            let s = pc_skeleton(&t, &FciConfig::default());
            let removed = s.log.removed_pairs();
            prop_assert_eq!(&s.log.replay_at(0.05), &removed);
            let replayed = s.log.replay_at(small);
            prop_assert!(removed.is_subset(&replayed));
        }
    }
}
