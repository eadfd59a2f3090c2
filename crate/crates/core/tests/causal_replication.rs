//! Sampling oracles for the CI tests and FCI on known structures.

use hydride_core::causal::sem::{standard_normals, LinearSem};
use hydride_core::causal::{
    chi_square_ci, fci, fisher_z_ci, pc_skeleton, CategoricalTable, FciConfig, FisherZTest, Mark, NumericTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

fn fisher_test(sem: &LinearSem, n: usize, seed: u64) -> FisherZTest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = sem.sample(n, &mut rng);
    FisherZTest::new(NumericTable::new(sem.names(), &cols).unwrap(), 0.05).unwrap()
}

// x -> z -> y over three categories each, with 70% copy-through.
fn discrete_chain(rng: &mut ChaCha8Rng, n: usize) -> CategoricalTable {
    let step = |parent: u32, rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.7) {
            parent
        } else {
            rng.random_range(0..3)
        }
    };
    let x: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let z: Vec<u32> = x.iter().map(|&v| step(v, rng)).collect();
    let y: Vec<u32> = z.iter().map(|&v| step(v, rng)).collect();
    CategoricalTable::new(names(&["x", "y", "z"]), vec![x, y, z]).unwrap()
}

// A calibrated test at alpha = 0.05 accepts a true null 95% of the time, so
// the acceptance rate is checked against that over 1000 replications
// (binomial 99% band around 0.95).
const ACCEPT_BAND: std::ops::RangeInclusive<f64> = 0.932..=0.968;

#[test]
fn chi_square_chain_screens_off() {
    let mut independent = 0;
    let mut marginal_dependent = 0;
    for seed in 0..1000 {
        let t = discrete_chain(&mut ChaCha8Rng::seed_from_u64(seed), 10_000);
        independent += chi_square_ci(&t, 0, 1, &[2], 0.05).independent as usize;
        marginal_dependent += !chi_square_ci(&t, 0, 1, &[], 0.05).independent as usize;
    }
    let rate = independent as f64 / 1000.0;
    assert!(ACCEPT_BAND.contains(&rate), "{rate}");
    assert_eq!(marginal_dependent, 1000);
}

#[test]
fn fisher_z_independent_normals() {
    let mut independent = 0;
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = standard_normals(&mut rng, 10_000);
        let y = standard_normals(&mut rng, 10_000);
        let t = NumericTable::new(names(&["x", "y"]), &[x, y]).unwrap();
        independent += fisher_z_ci(&t, 0, 1, &[], 0.05).independent as usize;
    }
    let rate = independent as f64 / 1000.0;
    assert!(ACCEPT_BAND.contains(&rate), "{rate}");
}

#[test]
fn type_one_error_near_alpha() {
    let (mut fisher, mut chi) = (0usize, 0usize);
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let x = standard_normals(&mut rng, 1000);
        let y = standard_normals(&mut rng, 1000);
        let t = NumericTable::new(names(&["x", "y"]), &[x, y]).unwrap();
        fisher += !fisher_z_ci(&t, 0, 1, &[], 0.05).independent as usize;
        let x: Vec<u32> = (0..1000).map(|_| rng.random_range(0..3)).collect();
        let y: Vec<u32> = (0..1000).map(|_| rng.random_range(0..3)).collect();
        let t = CategoricalTable::new(names(&["x", "y"]), vec![x, y]).unwrap();
        chi += !chi_square_ci(&t, 0, 1, &[], 0.05).independent as usize;
    }
    for (name, rejections) in [("fisher-z", fisher), ("chi-square", chi)] {
        let rate = rejections as f64 / 1000.0;
        assert!((0.03..=0.07).contains(&rate), "{name}: {rate}");
    }
}

#[test]
fn three_node_structures_recovered() {
    let panel = [
        LinearSem::new(3, vec![(0, 1, 0.8), (1, 2, 0.8)]),
        LinearSem::new(3, vec![(1, 0, 0.8), (1, 2, 0.8)]),
        LinearSem::new(3, vec![(0, 2, 0.8), (1, 2, 0.8)]),
    ];
    for sem in &panel {
        let mut hits = 0;
        for seed in 0..100 {
            let out = fci(&fisher_test(sem, 10_000, seed), &FciConfig::default());
            let got: std::collections::BTreeSet<_> = out.pag.edges().iter().map(|e| (e.a, e.b)).collect();
            hits += (got == sem.skeleton()) as usize;
        }
        assert!(hits >= 90, "{:?}: {hits}/100", sem.edges);
    }
}

#[test]
fn collider_orientation_rate() {
    let sem = LinearSem::new(3, vec![(0, 2, 0.8), (1, 2, 0.8)]);
    let mut hits = 0;
    for seed in 0..100 {
        let g = fci(&fisher_test(&sem, 10_000, 500 + seed), &FciConfig::default()).pag;
        hits += (!g.is_adjacent(0, 1)
            && g.mark(0, 2) == Some(Mark::Arrow)
            && g.mark(1, 2) == Some(Mark::Arrow)
            && g.mark(2, 0) == Some(Mark::Circle)
            && g.mark(2, 1) == Some(Mark::Circle)) as usize;
    }
    assert!(hits >= 90, "{hits}/100");
}

#[test]
fn fully_dependent_triple_keeps_triangle() {
    let sem = LinearSem::new(3, vec![(0, 1, 0.8), (0, 2, 0.8), (1, 2, 0.8)]);
    let s = pc_skeleton(&fisher_test(&sem, 10_000, 3), &FciConfig::default());
    assert_eq!(s.graph.edge_count(), 3);
}

#[test]
fn exact_copies_are_untestable_given_each_other() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = standard_normals(&mut rng, 1000);
    let t = FisherZTest::new(
        NumericTable::new(names(&["x", "y", "z"]), &[x.clone(), x.clone(), x]).unwrap(),
        0.05,
    )
    .unwrap();
    let s = pc_skeleton(&t, &FciConfig::default());
    let marginal: Vec<_> = s.log.records.iter().filter(|r| r.z.is_empty()).collect();
    assert_eq!(marginal.len(), 3);
    assert!(marginal.iter().all(|r| !r.independent && r.p_value == 0.0));
    assert!(s.log.untestable_count() > 0);
}

#[test]
fn parallel_and_serial_runs_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sem = LinearSem::random(5, 0.5, &mut rng);
    let t = fisher_test(&sem, 2000, 78);
    let a = fci(&t, &FciConfig::default());
    let b = fci(
        &t,
        &FciConfig {
            parallel: false,
            ..FciConfig::default()
        },
    );
    assert_eq!(a.pag, b.pag);
    assert_eq!(a.log, b.log);
}
