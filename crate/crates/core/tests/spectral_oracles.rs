use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use torus_walk::graph::{build_grid, build_torus};
use torus_walk::instances::{random_marked_set, random_reversible_chain};
use torus_walk::markov::{discriminant, stationary, walk_from_graph, MarkedSet, WalkMatrix};
use torus_walk::spectral::*;

fn two_state() -> WalkMatrix {
    WalkMatrix::from_dense(&DMatrix::from_element(2, 2, 0.5)).unwrap()
}

fn complete_chain(n: usize) -> WalkMatrix {
    WalkMatrix::from_dense(&DMatrix::from_element(n, n, 1.0 / n as f64)).unwrap()
}

/// Closed-form spectrum of the n x n torus walk: (cos(2 pi k/n) + cos(2 pi l/n)) / 2.
fn torus_spectrum(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .flat_map(|k| {
            (0..n).map(move |l| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let b = 2.0 * std::f64::consts::PI * l as f64 / n as f64;
                (a.cos() + b.cos()) / 2.0
            })
        })
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[test]
fn decompose_small_cases() {
    let id = decompose_dense(&DMatrix::identity(4, 4)).unwrap();
    assert!(id.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-14));

    let two = decompose(&discriminant(&two_state())).unwrap();
    assert!((two.eigenvalues[0] - 1.0).abs() < 1e-14);
    assert!(two.eigenvalues[1].abs() < 1e-14);
}

#[test]
fn torus_spectrum_matches_closed_form() {
    for n in [3, 4, 5, 8] {
        let p = walk_from_graph(&build_torus(n).unwrap()).unwrap();
        let d = discriminant(&p);
        let dec = decompose(&d).unwrap();
        for (a, b) in dec.eigenvalues.iter().zip(torus_spectrum(n)) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
        assert!(dec.reconstruction_error(&d.to_dense()) < RECONSTRUCTION_TOL);
        assert!(dec.orthonormality_error() < ORTHONORMALITY_TOL);
    }
}

#[test]
fn grid_principal_eigenvalue_and_gap() {
    let p = walk_from_graph(&build_grid(6).unwrap()).unwrap();
    let dec = decompose(&discriminant(&p)).unwrap();
    assert!((dec.eigenvalues[0] - 1.0).abs() < 1e-10);
    assert!(*dec.eigenvalues.last().unwrap() > -1.0);
    // Grid walk spectrum: (cos(pi k/n) + cos(pi l/n)) / 2, so delta = (1 - cos(pi/n)) / 2.
    let expected = (1.0 - (std::f64::consts::PI / 6.0).cos()) / 2.0;
    assert!((dec.gap() - expected).abs() < 1e-10);
}

#[test]
fn hitting_time_two_state() {
    let p = two_state();
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([0], 2).unwrap();
    assert!((hitting_time_spectral(&p, &pi, &m).unwrap() - 2.0).abs() < 1e-12);
    assert!((hitting_time_linear(&p, &pi, &m).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(effective_hitting_time(&p, &pi, &m).unwrap(), 2);
}

#[test]
fn hitting_time_complete_chain_is_n() {
    // From an unmarked state each step hits m with probability 1/N.
    for n in [3, 7, 16] {
        let p = complete_chain(n);
        let pi = stationary(&p).unwrap();
        let m = MarkedSet::new([1], n).unwrap();
        let ht = hitting_time_spectral(&p, &pi, &m).unwrap();
        let lin = hitting_time_linear(&p, &pi, &m).unwrap();
        assert!((ht - n as f64).abs() < 1e-9, "{ht}");
        assert!((lin - n as f64).abs() < 1e-9, "{lin}");
    }
}

#[test]
fn hitting_time_all_but_one_marked() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = random_reversible_chain(6, &mut rng);
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([0, 1, 2, 4, 5], 6).unwrap();
    let ht = hitting_time_spectral(&p, &pi, &m).unwrap();
    // Geometric holding time of the lone unmarked state.
    let expected = 1.0 / (1.0 - p.get(3, 3));
    assert!((ht - expected).abs() < 1e-10);
    assert!(ht > 0.0 && ht <= 2.0);
}

#[test]
fn hitting_time_one_step_absorption() {
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 / 3.0,
            1.0,
            1.0,
            1.0 / 3.0,
            0.0,
            0.0,
            1.0 / 3.0,
            0.0,
            0.0,
        ],
    );
    let p = WalkMatrix::from_dense(&m).unwrap();
    let pi = stationary(&p).unwrap();
    assert!((pi.probs[0] - 0.6).abs() < 1e-10);
    let marked = MarkedSet::new([0], 3).unwrap();
    assert!((hitting_time_linear(&p, &pi, &marked).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn hitting_time_torus_oracle_equivalence() {
    let p = walk_from_graph(&build_torus(5).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([0], 25).unwrap();
    let a = hitting_time_spectral(&p, &pi, &m).unwrap();
    let b = hitting_time_linear(&p, &pi, &m).unwrap();
    assert!((a - b).abs() <= 1e-6 * a.max(1.0));
}

#[test]
fn conjugate_gradient_routes_agree_with_dense() {
    let p = walk_from_graph(&build_torus(8).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let d = discriminant(&p);
    let dec = decompose(&d).unwrap();
    for subset in [vec![0], vec![3, 17, 40], (0..32).collect::<Vec<_>>()] {
        let g = pi.projection(&subset);
        let spectral = escape_time(&dec, &g).unwrap();
        let solved = escape_time_solve(&d, &pi, &g).unwrap();
        assert!(
            (spectral - solved).abs() < 1e-10 * spectral.max(1.0),
            "{spectral} {solved}"
        );
    }
}

#[test]
fn escape_time_examples() {
    let p = walk_from_graph(&build_grid(5).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let dec = decompose(&discriminant(&p)).unwrap();
    assert!(escape_time(&dec, &pi.amplitudes).unwrap().abs() < 1e-12);
    let all: Vec<usize> = (0..25).collect();
    assert_eq!(escape_time_subset(&dec, &pi, &all).unwrap(), 0.0);
    assert!(escape_time_subset(&dec, &pi, &[]).is_err());

    for n in [4, 9] {
        let p = complete_chain(n);
        let pi = stationary(&p).unwrap();
        let dec = decompose(&discriminant(&p)).unwrap();
        let e = escape_time_subset(&dec, &pi, &[2]).unwrap();
        assert!((e - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
        let m = MarkedSet::new([2], n).unwrap();
        let eht = extended_hitting_time(&dec, &pi, &m).unwrap();
        assert!((eht.value - (n as f64 - 1.0)).abs() < 1e-9);
    }
}

#[test]
fn escape_time_requires_gap() {
    let id = decompose_dense(&DMatrix::identity(3, 3)).unwrap();
    let g = [0.0, 1.0, 0.0];
    assert!(matches!(
        escape_time(&id, &g),
        Err(torus_walk::Error::NoSpectralGap(_))
    ));
    let dec = decompose(&discriminant(&two_state())).unwrap();
    assert!(escape_time(&dec, &[0.5, 0.5]).is_err());
}

/// Left half of the columns, plus a checkerboard on the right half: every
/// unmarked vertex has only marked neighbors.
fn gap_family(n: usize) -> Vec<usize> {
    (0..n * n)
        .filter(|v| {
            let (r, c) = (v / n, v % n);
            c < n / 2 || (r + c) % 2 == 0
        })
        .collect()
}

#[test]
fn half_torus_strip_scaling() {
    // The strip of columns c < n/2: both HT and (1/eps) E grow linearly in N.
    let mut eht_ratios = Vec::new();
    let mut ht_ratios = Vec::new();
    for n in [8, 16, 32] {
        let p = walk_from_graph(&build_torus(n).unwrap()).unwrap();
        let pi = stationary(&p).unwrap();
        let half: Vec<usize> = (0..n * n).filter(|v| v % n < n / 2).collect();
        let m = MarkedSet::new(half, n * n).unwrap();
        let eht = extended_hitting_time_auto(&p, &pi, &m).unwrap();
        let ht = hitting_time_linear(&p, &pi, &m).unwrap();
        eht_ratios.push(eht.value / (n * n) as f64);
        ht_ratios.push(ht / (n * n) as f64);
    }
    // HT is the exit time of a width-n/2 strip, (n/2 + 1)^2 / 3 asymptotically.
    for (ratios, band) in [(&eht_ratios, 1.5), (&ht_ratios, 2.0)] {
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo < band, "{ratios:?}");
    }
}

#[test]
fn gap_family_separates_ht_from_eht() {
    let mut ratios = Vec::new();
    for n in [8, 16, 32] {
        let p = walk_from_graph(&build_torus(n).unwrap()).unwrap();
        let pi = stationary(&p).unwrap();
        let m = MarkedSet::new(gap_family(n), n * n).unwrap();
        let ht = hitting_time_linear(&p, &pi, &m).unwrap();
        assert!((ht - 1.0).abs() < 1e-9, "n={n} ht={ht}");
        let eht = extended_hitting_time_auto(&p, &pi, &m).unwrap();
        ratios.push(eht.value / (n * n) as f64);
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo < 1.5, "{ratios:?}");
}

#[test]
fn interpolated_hitting_time_singleton_identity() {
    // For a single marked state the interpolated hitting time is
    // p_M(s)^2 HT, p_M(s) = eps / (eps + (1 - s)(1 - eps)).
    let p = walk_from_graph(&build_torus(5).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([7], 25).unwrap();
    let ht = hitting_time_linear(&p, &pi, &m).unwrap();
    let eps = 1.0 / 25.0;
    for s in [0.0, 0.5, 0.9, 0.99] {
        let pm = eps / (eps + (1.0 - s) * (1.0 - eps));
        let got = interpolated_hitting_time(&p, &pi, &m, s).unwrap();
        assert!(
            (got - pm * pm * ht).abs() < 1e-8 * ht,
            "s={s}: {got} vs {}",
            pm * pm * ht
        );
    }
    let limit = extended_hitting_time_limit(&p, &pi, &m, &DEFAULT_LIMIT_S).unwrap();
    assert!((limit.limit - ht).abs() < 0.01 * ht);
}

#[test]
fn interpolated_limit_half_torus_theta_agreement() {
    let n = 8;
    let p = walk_from_graph(&build_torus(n).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let half: Vec<usize> = (0..n * n).filter(|v| v % n < n / 2).collect();
    let m = MarkedSet::new(half, n * n).unwrap();
    let dec = decompose(&discriminant(&p)).unwrap();
    let eht = extended_hitting_time(&dec, &pi, &m).unwrap();
    let limit = extended_hitting_time_limit(&p, &pi, &m, &DEFAULT_LIMIT_S).unwrap();
    let ratio = limit.limit / eht.value;
    assert!((0.1..=10.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn limit_rejects_bad_schedules() {
    let p = two_state();
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([0], 2).unwrap();
    assert!(extended_hitting_time_limit(&p, &pi, &m, &[0.9]).is_err());
    assert!(extended_hitting_time_limit(&p, &pi, &m, &[0.99, 0.9]).is_err());
    assert!(interpolated_hitting_time(&p, &pi, &m, 1.0).is_err());
}

#[test]
fn degenerate_eigenspace_remixing_is_invisible() {
    // The torus spectrum is highly degenerate; rotate each degenerate block by
    // a random orthogonal matrix and recompute the escape time.
    let p = walk_from_graph(&build_torus(6).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let dec = decompose(&discriminant(&p)).unwrap();
    let g = pi.projection(&[0, 1, 9]);
    let before = escape_time(&dec, &g).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mixed = dec.clone();
    for group in dec.degenerate_groups(1e-9) {
        if group.len() < 2 {
            continue;
        }
        let k = group.len();
        let raw =
            DMatrix::<f64>::from_fn(k, k, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let q = raw.qr().q();
        let block = DMatrix::from_fn(dec.dim(), k, |i, j| dec.eigenvectors[(i, group[j])]);
        let rotated = block * q;
        for (j, &col) in group.iter().enumerate() {
            mixed.eigenvectors.set_column(col, &rotated.column(j));
        }
    }
    assert!(mixed.orthonormality_error() < 1e-10);
    let after = escape_time(&mixed, &g).unwrap();
    assert!((before - after).abs() < 1e-10 * before);
}

#[test]
fn effective_hitting_time_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..20 {
        let n = 4 + trial % 12;
        let p = random_reversible_chain(n, &mut rng);
        let pi = stationary(&p).unwrap();
        let m = random_marked_set(n, 1 + trial % 3, &mut rng);
        let ht = hitting_time_linear(&p, &pi, &m).unwrap();
        let eff = effective_hitting_time(&p, &pi, &m).unwrap();
        assert!(eff >= 1);
        assert!(eff as f64 <= 3.0 * ht + 1.0, "eff={eff} ht={ht}");
    }
    // Unconditioned start may already satisfy the threshold.
    let p = complete_chain(3);
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([0, 1], 3).unwrap();
    let t = effective_hitting_time_with(&p, &pi, &m, 2.0 / 3.0, StartDistribution::Stationary, 10)
        .unwrap();
    assert_eq!(t, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn spectral_and_linear_hitting_times_agree(seed in any::<u64>(), n in 3usize..24, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_reversible_chain(n, &mut rng);
        let pi = stationary(&p).unwrap();
        let m = random_marked_set(n, k, &mut rng);
        let a = hitting_time_spectral(&p, &pi, &m).unwrap();
        let b = hitting_time_linear(&p, &pi, &m).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0));
    }

    #[test]
    fn escape_time_bounds_for_orthogonal_vectors(seed in any::<u64>(), n in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_reversible_chain(n, &mut rng);
        let pi = stationary(&p).unwrap();
        let dec = decompose(&discriminant(&p)).unwrap();
        let mut g: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let c: f64 = g.iter().zip(&pi.amplitudes).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(&pi.amplitudes).for_each(|(x, r)| *x -= c * r);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        g.iter_mut().for_each(|x| *x /= norm);
        let e = escape_time(&dec, &g).unwrap();
        prop_assert!(e >= 0.5 - 1e-12);
        prop_assert!(e <= 1.0 / dec.gap() + 1e-9);
    }

    #[test]
    fn escape_time_is_subadditive(seed in any::<u64>(), n in 4usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_reversible_chain(n, &mut rng);
        let pi = stationary(&p).unwrap();
        let dec = decompose(&discriminant(&p)).unwrap();
        let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
        let split = 1 + (seed as usize) % (n - 2);
        let s1 = &perm[..split];
        let s2 = &perm[split..n - 1];
        let union: Vec<usize> = s1.iter().chain(s2).copied().collect();
        let e1 = escape_time_subset(&dec, &pi, s1).unwrap();
        let e2 = escape_time_subset(&dec, &pi, s2).unwrap();
        let eu = escape_time_subset(&dec, &pi, &union).unwrap();
        prop_assert!(eu <= e1 + e2 + 1e-9);
        let m = MarkedSet::new(union.clone(), n).unwrap();
        let eht = extended_hitting_time(&dec, &pi, &m).unwrap();
        prop_assert!(eht.value <= 1.0 / (eht.eps_marked * dec.gap()) + 1e-9);
    }
}
