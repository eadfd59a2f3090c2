use hydride_core::linalg::{symmetric_eigen, Matrix};
use proptest::prelude::*;

fn symmetric(vals: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut it = vals.iter();
    for i in 0..n {
        for j in i..n {
            let v = *it.next().unwrap();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

proptest! {
    #[test]
    fn eigenvalues_match_nalgebra(n in 1usize..8, vals in prop::collection::vec(-5.0f64..5.0, 36)) {
        let m = symmetric(&vals, n);
        let ours = symmetric_eigen(&m);
        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
        let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.values.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_matches_nalgebra(n in 1usize..7, vals in prop::collection::vec(-5.0f64..5.0, 36)) {
        // Diagonally dominant, so always invertible.
        let mut m = symmetric(&vals, n);
        for i in 0..n {
            m[(i, i)] += 40.0;
        }
        let ours = m.inverse().unwrap();
        let theirs = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]).try_inverse().unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((ours[(i, j)] - theirs[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
