//! Szegedy-type quantum walks simulated on their invariant subspace.
//!
//! For a walk `P` let `A|x> = |x> (x) sum_y sqrt(P_yx) |y>` and `B = SWAP A`.
//! The pair space is `N^2`-dimensional, but `span(A, B)` (dimension at most
//! `2N`) is invariant under one walk step `W = SWAP (2 A A^T - I)`, so every
//! state is kept as coordinates `(a, b)` with `|psi> = A a + B b`. Since
//! `A^T B = D(P)`, a step acts as `(a, b) -> (-b, a + 2 D b)`, and
//! `W^2 = Ref_B Ref_A` is the usual two-reflection walk. On each
//! `span(A v_k, B v_k)` the step is a rotation by `arccos(lambda_k)`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::build_torus;
use crate::markov::{
    discriminant, interpolate, make_absorbing, stationary, walk_from_graph, Discriminant,
    MarkedSet, StationaryDistribution, WalkMatrix,
};
use crate::spectral::{
    decompose, decompose_dense, effective_hitting_time, hitting_time_linear, AbsorptionProfile,
    StartDistribution,
};

/// Setup / update / check operation counts. One walk step is one update plus
/// one check; the initial check is folded into the setup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub setup: u64,
    pub update: u64,
    pub check: u64,
}

impl CostLedger {
    pub fn charge_setup(&mut self, count: u64) {
        self.setup += count;
    }

    pub fn charge_steps(&mut self, steps: u64) {
        self.update += steps;
        self.check += steps;
    }

    /// Walk steps `T` in the `S + T (U + C)` convention.
    pub fn steps(&self) -> u64 {
        self.update
    }

    /// Total cost for the given unit prices.
    pub fn total(&self, setup_cost: f64, update_cost: f64, check_cost: f64) -> f64 {
        self.setup as f64 * setup_cost
            + self.update as f64 * update_cost
            + self.check as f64 * check_cost
    }

    pub fn absorb(&mut self, other: &CostLedger) {
        self.setup += other.setup;
        self.update += other.update;
        self.check += other.check;
    }
}

/// State `A a + B b` in invariant-subspace coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl WalkState {
    /// `A a`, i.e. `sum_x a_x |x>|p_x>`.
    pub fn from_vertex_amplitudes(a: Vec<f64>) -> WalkState {
        let b = vec![0.0; a.len()];
        WalkState { a, b }
    }
}

/// One marked-mass term: neighbour `v` with `sqrt(P_vu)` and `sqrt(P_uv)`.
#[derive(Debug, Clone, Copy)]
struct PairTerm {
    v: usize,
    sqrt_out: f64,
    sqrt_in: f64,
}

#[derive(Debug, Clone)]
pub struct SzegedyWalk {
    base: WalkMatrix,
    disc: Discriminant,
    /// For each vertex `u`: every `v` with `P_vu > 0` or `P_uv > 0`.
    pair_terms: Vec<Vec<PairTerm>>,
}

pub fn build_walk(base: &WalkMatrix) -> SzegedyWalk {
    let n = base.dim();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (y, x, v) in base.triplets() {
        rows[y].push((x, v));
    }
    let pair_terms = (0..n)
        .map(|u| {
            let mut terms: HashMap<usize, PairTerm> = HashMap::new();
            for (v, p) in base.column(u) {
                terms
                    .entry(v)
                    .or_insert(PairTerm {
                        v,
                        sqrt_out: 0.0,
                        sqrt_in: 0.0,
                    })
                    .sqrt_out = p.sqrt();
            }
            for &(v, p) in &rows[u] {
                terms
                    .entry(v)
                    .or_insert(PairTerm {
                        v,
                        sqrt_out: 0.0,
                        sqrt_in: 0.0,
                    })
                    .sqrt_in = p.sqrt();
            }
            let mut terms: Vec<PairTerm> = terms.into_values().collect();
            terms.sort_by_key(|t| t.v);
            terms
        })
        .collect();
    SzegedyWalk {
        base: base.clone(),
        disc: discriminant(base),
        pair_terms,
    }
}

impl SzegedyWalk {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &WalkMatrix {
        &self.base
    }

    pub fn discriminant(&self) -> &Discriminant {
        &self.disc
    }

    /// One step `W = SWAP (2 A A^T - I)`.
    pub fn step(&self, state: &mut WalkState, scratch: &mut Vec<f64>) {
        scratch.resize(self.dim(), 0.0);
        self.disc.mul_vec_into(&state.b, scratch);
        for ((a, b), &db) in state
            .a
            .iter_mut()
            .zip(state.b.iter_mut())
            .zip(scratch.iter())
        {
            let old_a = *a;
            *a = -*b;
            *b = old_a + 2.0 * db;
        }
    }

    /// `<psi|phi>` for two coordinate states.
    pub fn inner(&self, psi: &WalkState, phi: &WalkState) -> f64 {
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let db = self.disc.mul_vec(&phi.b);
        let da = self.disc.mul_vec(&phi.a);
        dot(&psi.a, &phi.a) + dot(&psi.a, &db) + dot(&psi.b, &da) + dot(&psi.b, &phi.b)
    }

    pub fn norm_sq(&self, psi: &WalkState) -> f64 {
        self.inner(psi, psi)
    }

    /// Probability that measuring the first register yields `u`.
    pub fn vertex_probability(&self, psi: &WalkState, u: usize) -> f64 {
        self.pair_terms[u]
            .iter()
            .map(|t| {
                let amp = psi.a[u] * t.sqrt_out + psi.b[t.v] * t.sqrt_in;
                amp * amp
            })
            .sum()
    }

    /// First-register distribution over all vertices.
    pub fn vertex_distribution(&self, psi: &WalkState) -> Vec<f64> {
        (0..self.dim())
            .map(|u| self.vertex_probability(psi, u))
            .collect()
    }

    pub fn marked_mass(&self, psi: &WalkState, marked: &[usize]) -> f64 {
        marked
            .iter()
            .map(|&u| self.vertex_probability(psi, u))
            .sum()
    }

    /// Dense matrix of one step restricted to `span(A, B)` in an orthonormal
    /// basis obtained from the Gram matrix `[[I, D], [D, I]]`. Intended for
    /// small chains (the cost is `O(N^3)`).
    pub fn restricted_operator(&self) -> Result<RestrictedWalk> {
        let n = self.dim();
        let d = self.disc.to_dense();
        let mut gram = DMatrix::<f64>::identity(2 * n, 2 * n);
        gram.view_mut((0, n), (n, n)).copy_from(&d);
        gram.view_mut((n, 0), (n, n)).copy_from(&d);
        let mut step = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            step[(i, n + i)] = -1.0;
            step[(n + i, i)] = 1.0;
        }
        step.view_mut((n, n), (n, n)).copy_from(&(&d * 2.0));

        let g = decompose_dense(&gram)?;
        let keep: Vec<usize> = (0..2 * n).filter(|&k| g.eigenvalues[k] > 1e-9).collect();
        let mut basis = DMatrix::<f64>::zeros(2 * n, keep.len());
        for (j, &k) in keep.iter().enumerate() {
            let scale = g.eigenvalues[k].sqrt().recip();
            basis.set_column(j, &(g.eigenvectors.column(k) * scale));
        }
        let matrix = basis.transpose() * &gram * &step * &basis;
        Ok(RestrictedWalk {
            reduced: keep.len() < 2 * n,
            matrix,
        })
    }
}

/// One walk step as a real matrix on an orthonormal basis of the invariant
/// subspace. `reduced` is set when the subspace has dimension below `2N`
/// (discriminant eigenvalues at exactly `+-1`).
#[derive(Debug, Clone)]
pub struct RestrictedWalk {
    pub matrix: DMatrix<f64>,
    pub reduced: bool,
}

impl RestrictedWalk {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn unitarity_error(&self) -> f64 {
        let m = &self.matrix;
        (m.transpose() * m - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// Eigenphases in `(-pi, pi]`, sorted ascending.
    pub fn eigenphases(&self) -> Vec<f64> {
        let eig: Vec<Complex<f64>> = self.matrix.complex_eigenvalues().iter().copied().collect();
        let mut phases: Vec<f64> = eig.iter().map(|z| z.im.atan2(z.re)).collect();
        phases.sort_by(f64::total_cmp);
        phases
    }
}

/// Detection: overlap `|<init|W'^t|init>|` for `t = 0..=t_max`, where `W'` is
/// the walk of the absorbing chain and `|init> = A' |pi>`.
pub fn detection_overlaps(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: Option<&MarkedSet>,
    t_max: usize,
) -> Result<Vec<f64>> {
    let base = match marked {
        Some(m) => make_absorbing(p, m)?,
        None => p.clone(),
    };
    let walk = build_walk(&base);
    let init = WalkState::from_vertex_amplitudes(pi.amplitudes.clone());
    let mut psi = init.clone();
    let mut scratch = Vec::new();
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            walk.step(&mut psi, &mut scratch);
        }
        out.push(walk.inner(&init, &psi).abs());
    }
    Ok(out)
}

/// Overlap after `t_q` steps of the absorbing walk; charges one setup and
/// `t_q` update/check pairs. With `marked = None` the walk is `P` itself.
pub fn simulate_detection(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: Option<&MarkedSet>,
    t_q: usize,
    ledger: &mut CostLedger,
) -> Result<f64> {
    let overlaps = detection_overlaps(p, pi, marked, t_q)?;
    ledger.charge_setup(1);
    ledger.charge_steps(t_q as u64);
    Ok(overlaps[t_q])
}

/// Interpolation parameter `s = 1 - e/(1 - e)` clamped to `[0, 1 - 1e-9]`.
pub fn interpolation_parameter(eps_estimate: f64) -> Result<f64> {
    if !(eps_estimate > 0.0 && eps_estimate < 1.0) {
        return Err(invalid(format!(
            "eps estimate {eps_estimate} must lie in (0, 1)"
        )));
    }
    let s = 1.0 - eps_estimate / (1.0 - eps_estimate);
    Ok(s.clamp(0.0, 1.0 - 1e-9))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindOutcome {
    pub s: f64,
    pub steps: usize,
    pub eps_marked: f64,
    /// Marked mass of the time-averaged walk started from the unmarked state.
    pub walk_success: f64,
    /// `eps_M + (1 - eps_M) * walk_success`.
    pub success_probability: f64,
    /// Time-averaged first-register distribution of the whole procedure.
    pub vertex_distribution: Vec<f64>,
}

/// Finding by the interpolated walk. The initial check measures the
/// stationary state; a marked outcome (probability `eps_M`) ends the search.
/// Otherwise the state is `A |U_pi>` and the walk `W(P(s))` runs for a
/// uniformly random `t in 0..steps`; the result is the exact average over `t`
/// of the first-register distribution.
pub fn find_via_interpolation(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    eps_estimate: f64,
    steps: usize,
    ledger: &mut CostLedger,
) -> Result<FindOutcome> {
    let s = interpolation_parameter(eps_estimate)?;
    if steps == 0 {
        return Err(invalid("finding needs at least one step"));
    }
    let (walk, mut psi) = interpolated_start(p, pi, marked, s)?;
    let eps_marked = pi.mass(marked.members());
    let eps_u = 1.0 - eps_marked;

    let n = p.dim();
    let mut avg = vec![0.0; n];
    let mut scratch = Vec::new();
    for t in 0..steps {
        if t > 0 {
            walk.step(&mut psi, &mut scratch);
        }
        for (u, acc) in avg.iter_mut().enumerate() {
            *acc += walk.vertex_probability(&psi, u);
        }
    }
    avg.iter_mut().for_each(|x| *x /= steps as f64);
    let walk_success: f64 = marked.members().iter().map(|&m| avg[m]).sum();

    let mut vertex_distribution: Vec<f64> = avg.iter().map(|x| x * eps_u).collect();
    for &m in marked.members() {
        vertex_distribution[m] += pi.probs[m];
    }
    ledger.charge_setup(1);
    ledger.charge_steps(steps as u64);
    Ok(FindOutcome {
        s,
        steps,
        eps_marked,
        walk_success,
        success_probability: eps_marked + eps_u * walk_success,
        vertex_distribution,
    })
}

fn interpolated_start(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    s: f64,
) -> Result<(SzegedyWalk, WalkState)> {
    let p_abs = make_absorbing(p, marked)?;
    let walk = build_walk(&interpolate(p, &p_abs, s)?);
    let norm = (1.0 - pi.mass(marked.members())).sqrt();
    let mut a: Vec<f64> = pi.amplitudes.iter().map(|x| x / norm).collect();
    for &m in marked.members() {
        a[m] = 0.0;
    }
    Ok((walk, WalkState::from_vertex_amplitudes(a)))
}

/// Success probability of `find_via_interpolation` for every step count
/// `1..=max_steps` in one pass; entry `i` is the value for `i + 1` steps.
pub fn find_success_curve(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    eps_estimate: f64,
    max_steps: usize,
) -> Result<Vec<f64>> {
    let s = interpolation_parameter(eps_estimate)?;
    let (walk, mut psi) = interpolated_start(p, pi, marked, s)?;
    let eps_marked = pi.mass(marked.members());
    let mut scratch = Vec::new();
    let mut total = 0.0;
    let mut out = Vec::with_capacity(max_steps);
    for t in 0..max_steps {
        if t > 0 {
            walk.step(&mut psi, &mut scratch);
        }
        total += walk.marked_mass(&psi, marked.members());
        out.push(eps_marked + (1.0 - eps_marked) * total / (t + 1) as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub steps: usize,
    pub success: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub h_tilde: usize,
    /// Set when the cost cap stopped the search and `h_tilde` is the fallback.
    pub capped: bool,
    pub probes: Vec<Probe>,
    pub ledger: CostLedger,
    /// The stand-in always succeeds; reports carry this tag.
    pub idealized: bool,
}

pub const ESTIMATE_THRESHOLD: f64 = 0.75;

/// Doubling search standing in for the phase-estimation based estimator:
/// probes `T = 1, 2, 4, ...`, each evaluating exactly whether `T` steps of
/// `P'` from the unmarked-conditioned stationary start reach the marked set
/// with probability 3/4, and each charging `ceil(sqrt(T))` update/check
/// pairs. With a cap `(max_steps, fallback)`, a probe that would push the
/// ledger past `max_steps` halts the search and returns `fallback`.
pub fn estimate_effective_ht(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    cap: Option<(u64, usize)>,
) -> Result<HittingEstimate> {
    let ht = hitting_time_linear(p, pi, marked)?;
    let iteration_cap = 100 * (ht.ceil() as usize).max(1);
    let mut profile = AbsorptionProfile::new(p, pi, marked, StartDistribution::UnmarkedStationary)?;
    let mut ledger = CostLedger::default();
    ledger.charge_setup(1);
    let mut probes = Vec::new();
    let mut t = 1usize;
    loop {
        let charge = (t as f64).sqrt().ceil() as u64;
        if let Some((max_steps, fallback)) = cap {
            if ledger.steps() + charge > max_steps {
                let rest = max_steps.saturating_sub(ledger.steps());
                ledger.charge_steps(rest);
                return Ok(HittingEstimate {
                    h_tilde: fallback,
                    capped: true,
                    probes,
                    ledger,
                    idealized: true,
                });
            }
        }
        if t > 2 * iteration_cap {
            return Err(crate::Error::CapExceeded(iteration_cap));
        }
        ledger.charge_steps(charge);
        while profile.steps() < t {
            profile.step();
        }
        let success = profile.marked_mass();
        let passed = success >= ESTIMATE_THRESHOLD - 1e-12;
        probes.push(Probe {
            steps: t,
            success,
            passed,
        });
        if passed {
            return Ok(HittingEstimate {
                h_tilde: t,
                capped: false,
                probes,
                ledger,
                idealized: true,
            });
        }
        t *= 2;
    }
}

fn unique_cache() -> &'static Mutex<HashMap<usize, usize>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, usize>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `H_unique(n)`: effective hitting time of a single marked vertex on the
/// `n x n` torus. Computed once per `n` and cached.
pub fn h_unique(n: usize) -> Result<usize> {
    if let Some(&h) = unique_cache().lock().expect("cache lock").get(&n) {
        return Ok(h);
    }
    let p = walk_from_graph(&build_torus(n)?)?;
    let pi = stationary(&p)?;
    let m = MarkedSet::new([0], n * n)?;
    let h = effective_hitting_time(&p, &pi, &m)?;
    unique_cache().lock().expect("cache lock").insert(n, h);
    Ok(h)
}

/// Runs the estimator on the `n x n` torus with the `ceil(sqrt(H_unique))`
/// step budget, falling back to `H_unique`.
pub fn cap_estimate(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    n: usize,
) -> Result<HittingEstimate> {
    let unique = h_unique(n)?;
    let budget = (unique as f64).sqrt().ceil() as u64;
    estimate_effective_ht(p, pi, marked, Some((budget, unique)))
}

/// Eigenvalue multiset of `D` as seen by the walk: each `|lambda| < 1`
/// contributes two eigenphases, `lambda = +-1` one.
pub fn expected_phase_cosines(p: &WalkMatrix) -> Result<Vec<f64>> {
    let dec = decompose(&discriminant(p))?;
    let mut out = Vec::new();
    for &l in &dec.eigenvalues {
        let l = l.clamp(-1.0, 1.0);
        out.push(l);
        if l.abs() < 1.0 - 1e-9 {
            out.push(l);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_accounting() {
        let mut l = CostLedger::default();
        l.charge_setup(1);
        l.charge_steps(5);
        assert_eq!(l.steps(), 5);
        assert_eq!(l.check, 5);
        assert_eq!(l.total(10.0, 1.0, 2.0), 10.0 + 5.0 + 10.0);
    }

    #[test]
    fn interpolation_parameter_formula() {
        assert!((interpolation_parameter(0.1).unwrap() - (1.0 - 0.1 / 0.9)).abs() < 1e-15);
        assert_eq!(interpolation_parameter(0.5).unwrap(), 0.0);
        assert_eq!(interpolation_parameter(0.7).unwrap(), 0.0);
        assert!(interpolation_parameter(1.0).is_err());
        assert!(interpolation_parameter(0.0).is_err());
        assert_eq!(interpolation_parameter(1e-12).unwrap(), 1.0 - 1e-9);
    }
}
