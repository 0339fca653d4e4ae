//! Randomized problem instances shared by the property suites.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

use crate::markov::{MarkedSet, WalkMatrix};

/// Random reversible ergodic chain on `n` states: symmetric positive weights
/// `w_xy`, normalized by column. The stationary distribution is
/// proportional to the column sums of `w`.
pub fn random_reversible_chain<R: Rng + ?Sized>(n: usize, rng: &mut R) -> WalkMatrix {
    let mut w = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let v: f64 = rng.random_range(0.05..1.0);
            w[(x, y)] = v;
            w[(y, x)] = v;
        }
    }
    for x in 0..n {
        let total: f64 = w.column(x).sum();
        for y in 0..n {
            w[(y, x)] /= total;
        }
    }
    WalkMatrix::from_dense(&w).expect("normalized columns")
}

/// Random nonempty proper subset of `0..n` with `size` elements.
pub fn random_marked_set<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> MarkedSet {
    let size = size.clamp(1, n - 1);
    MarkedSet::new(sample(rng, n, size), n).expect("proper subset")
}
