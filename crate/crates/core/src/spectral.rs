//! Spectral quantities of reversible walks: hitting time, effective hitting
//! time, escape time and extended hitting time, each with an independent
//! second route (linear solves, iteration, or the `s -> 1` interpolation
//! limit) used for cross-checking.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::markov::{
    discriminant, interpolate, make_absorbing, stationary_interpolated, Discriminant, MarkedSet,
    StationaryDistribution, WalkMatrix,
};

pub const RECONSTRUCTION_TOL: f64 = 1e-8;
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
const PERRON_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-12;

/// Above this many states the direct LU solve gives way to conjugate
/// gradients on the symmetrized system.
pub const DENSE_SOLVE_LIMIT: usize = 2048;
/// Above this many states escape times are computed by conjugate gradients
/// instead of a full eigendecomposition.
pub const DENSE_SPECTRAL_LIMIT: usize = 1024;

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `delta = 1 - lambda_2`; zero for a 1x1 matrix.
    pub fn gap(&self) -> f64 {
        match self.eigenvalues.get(1) {
            Some(l2) => 1.0 - l2,
            None => 0.0,
        }
    }

    pub fn reconstruction_error(&self, target: &DMatrix<f64>) -> f64 {
        let v = &self.eigenvectors;
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        (v * lambda * v.transpose() - target).amax()
    }

    pub fn orthonormality_error(&self) -> f64 {
        let v = &self.eigenvectors;
        (v.transpose() * v - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// Squared overlaps `|<lambda_k|g>|^2` for every k.
    pub fn overlaps(&self, g: &[f64]) -> Vec<f64> {
        let g = DVector::from_column_slice(g);
        let c = self.eigenvectors.tr_mul(&g);
        c.iter().map(|x| x * x).collect()
    }

    /// Indices grouped by (numerically) equal eigenvalue.
    pub fn degenerate_groups(&self, tol: f64) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if (self.eigenvalues[g[0]] - l).abs() <= tol => g.push(k),
                _ => groups.push(vec![k]),
            }
        }
        groups
    }
}

fn sorted_eigen(m: DMatrix<f64>) -> SpectralDecomposition {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        eigenvectors.set_column(j, &eig.eigenvectors.column(k));
    }
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Full eigendecomposition of a dense symmetric matrix, verified by its
/// reconstruction residual.
pub fn decompose_dense(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    if m.nrows() != m.ncols() {
        return Err(invalid("matrix must be square"));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 {
        return Err(invalid(format!("matrix is not symmetric (error {asym:e})")));
    }
    let dec = sorted_eigen(m.clone());
    // ||M V - V diag(lambda)||, which bounds the reconstruction error for
    // orthonormal V at O(N^2) extra cost instead of O(N^3).
    let mut residual = 0.0f64;
    let mv = m * &dec.eigenvectors;
    for k in 0..dec.dim() {
        let lk = dec.eigenvalues[k];
        for i in 0..dec.dim() {
            residual = residual.max((mv[(i, k)] - lk * dec.eigenvectors[(i, k)]).abs());
        }
    }
    if residual > RECONSTRUCTION_TOL || !residual.is_finite() {
        return Err(Error::Decomposition(residual));
    }
    Ok(dec)
}

pub fn decompose(d: &Discriminant) -> Result<SpectralDecomposition> {
    decompose_dense(&d.to_dense())
}

/// `HT(P, M) = sum_k |<lambda'_k|U_pi>|^2 / (1 - lambda'_k)` over the
/// unmarked eigenvectors of `D(P')`.
pub fn hitting_time_spectral(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
) -> Result<f64> {
    let p_abs = make_absorbing(p, marked)?;
    let d_abs = discriminant(&p_abs);
    let unmarked = marked.unmarked();
    let block = d_abs.restricted_dense(&unmarked);
    let dec = decompose_dense(&block)?;
    if let Some(&top) = dec.eigenvalues.first() {
        if top >= 1.0 - PERRON_TOL {
            return Err(Error::NoPerronSeparation(top));
        }
    }
    let eps_u = pi.mass(&unmarked);
    let u_pi: Vec<f64> = unmarked
        .iter()
        .map(|&x| pi.amplitudes[x] / eps_u.sqrt())
        .collect();
    Ok(dec
        .overlaps(&u_pi)
        .iter()
        .zip(&dec.eigenvalues)
        .map(|(o, l)| o / (1.0 - l))
        .sum())
}

/// Expected absorption time from the pi-conditioned unmarked start, by
/// solving `t_x = 1 + sum_{y in U} P_yx t_y`.
pub fn hitting_time_linear(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
) -> Result<f64> {
    let unmarked = marked.unmarked();
    if unmarked.len() > DENSE_SOLVE_LIMIT {
        return hitting_time_cg(p, pi, marked);
    }
    let mut index = vec![usize::MAX; p.dim()];
    for (i, &x) in unmarked.iter().enumerate() {
        index[x] = i;
    }
    let n = unmarked.len();
    // Row i of the system is state x = unmarked[i].
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, &x) in unmarked.iter().enumerate() {
        for (y, v) in p.column(x) {
            if index[y] != usize::MAX {
                a[(i, index[y])] -= v;
            }
        }
    }
    let rhs = DVector::from_element(n, 1.0);
    let t = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("marked set unreachable from some state".into()))?;
    if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Singular("non-finite absorption times".into()));
    }
    let eps_u = pi.mass(&unmarked);
    Ok(unmarked
        .iter()
        .enumerate()
        .map(|(i, &x)| pi.probs[x] / eps_u * t[i])
        .sum())
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
/// `project` is applied to every iterate and search direction, which keeps
/// the solve inside the range when the operator has a known kernel.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    project: impl Fn(&mut [f64]),
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    project(&mut r);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = rel_tol * rel_tol * dot(rhs, rhs).max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rr <= target {
            return Ok(x);
        }
        apply(&p, &mut ap);
        project(&mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        project(&mut p);
    }
    if rr <= target * 1e4 {
        return Ok(x);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: (rr / dot(rhs, rhs)).sqrt(),
    })
}

/// Hitting time through the symmetrized system `(I - D_U) z = sqrt(pi_U)`,
/// `HT = <sqrt(pi_U), z> / eps_U`. Valid for reversible chains.
fn hitting_time_cg(p: &WalkMatrix, pi: &StationaryDistribution, marked: &MarkedSet) -> Result<f64> {
    let d = discriminant(p);
    let mask = marked.mask();
    let rhs: Vec<f64> = (0..p.dim())
        .map(|x| if mask[x] { 0.0 } else { pi.amplitudes[x] })
        .collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        d.mul_vec_into(v, out);
        for x in 0..v.len() {
            out[x] = if mask[x] { 0.0 } else { v[x] - out[x] };
        }
    };
    let z = conjugate_gradient(apply, &rhs, |_| {}, 1e-13, 50 * p.dim() + 1000)?;
    let eps_u = 1.0 - pi.mass(marked.members());
    Ok(rhs.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / eps_u)
}

/// Where the absorbing walk starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartDistribution {
    /// `pi` restricted to unmarked states and renormalized.
    #[default]
    UnmarkedStationary,
    /// `pi` itself.
    Stationary,
}

/// Marked mass of the absorbing walk after 0, 1, 2, ... steps.
pub struct AbsorptionProfile<'a> {
    p_abs: WalkMatrix,
    marked: &'a MarkedSet,
    dist: Vec<f64>,
    scratch: Vec<f64>,
    steps: usize,
}

impl<'a> AbsorptionProfile<'a> {
    pub fn new(
        p: &WalkMatrix,
        pi: &StationaryDistribution,
        marked: &'a MarkedSet,
        start: StartDistribution,
    ) -> Result<AbsorptionProfile<'a>> {
        let p_abs = make_absorbing(p, marked)?;
        let mut dist = pi.probs.clone();
        if start == StartDistribution::UnmarkedStationary {
            for &m in marked.members() {
                dist[m] = 0.0;
            }
            let total: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|x| *x /= total);
        }
        let scratch = vec![0.0; dist.len()];
        Ok(AbsorptionProfile {
            p_abs,
            marked,
            dist,
            scratch,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn marked_mass(&self) -> f64 {
        self.marked.members().iter().map(|&m| self.dist[m]).sum()
    }

    pub fn step(&mut self) {
        self.p_abs.apply_into(&self.dist, &mut self.scratch);
        std::mem::swap(&mut self.dist, &mut self.scratch);
        self.steps += 1;
    }

    /// Advances until the marked mass reaches `threshold` (up to 1e-12) and
    /// returns the step count, or `None` once `cap` steps have been taken.
    pub fn run_until(&mut self, threshold: f64, cap: usize) -> Option<usize> {
        loop {
            if self.marked_mass() >= threshold - 1e-12 {
                return Some(self.steps);
            }
            if self.steps >= cap {
                return None;
            }
            self.step();
        }
    }
}

/// Steps of `P'` needed to reach the marked set with probability `threshold`.
pub fn effective_hitting_time_with(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    threshold: f64,
    start: StartDistribution,
    cap: usize,
) -> Result<usize> {
    let mut profile = AbsorptionProfile::new(p, pi, marked, start)?;
    profile
        .run_until(threshold, cap)
        .ok_or(Error::CapExceeded(cap))
}

/// `HT_eff`: steps to reach the marked set with probability 2/3 from the
/// pi-conditioned unmarked start, capped at `100 * ceil(HT)`.
pub fn effective_hitting_time(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
) -> Result<usize> {
    let ht = hitting_time_linear(p, pi, marked)?;
    let cap = 100 * (ht.ceil() as usize).max(1);
    effective_hitting_time_with(
        p,
        pi,
        marked,
        2.0 / 3.0,
        StartDistribution::UnmarkedStationary,
        cap,
    )
}

/// `E(P, g) = sum_{k >= 2} |<lambda_k|g>|^2 / (1 - lambda_k)` with the
/// spectrum of `D(P)`.
pub fn escape_time(dec: &SpectralDecomposition, g: &[f64]) -> Result<f64> {
    check_unit(g)?;
    if dec.dim() < 2 {
        return Ok(0.0);
    }
    let l2 = dec.eigenvalues[1];
    if l2 >= 1.0 - GAP_TOL {
        return Err(Error::NoSpectralGap(l2));
    }
    Ok(dec
        .overlaps(g)
        .iter()
        .zip(&dec.eigenvalues)
        .skip(1)
        .map(|(o, l)| o / (1.0 - l))
        .sum())
}

fn check_unit(g: &[f64]) -> Result<()> {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("escape-time vector has norm {norm}")));
    }
    Ok(())
}

/// `E(P, S_pi)`; zero when `S` is the whole state space.
pub fn escape_time_subset(
    dec: &SpectralDecomposition,
    pi: &StationaryDistribution,
    subset: &[usize],
) -> Result<f64> {
    if subset.is_empty() {
        return Err(invalid("escape time of an empty subset"));
    }
    if subset.len() == pi.len() {
        return Ok(0.0);
    }
    escape_time(dec, &pi.projection(subset))
}

/// Escape time through `(I - D) x = g_perp`, `E = <g_perp, x>`, where
/// `g_perp` removes the `|pi>` component. Needs no eigendecomposition.
pub fn escape_time_solve(d: &Discriminant, pi: &StationaryDistribution, g: &[f64]) -> Result<f64> {
    check_unit(g)?;
    let root = &pi.amplitudes;
    let along: f64 = root.iter().zip(g).map(|(a, b)| a * b).sum();
    let rhs: Vec<f64> = g.iter().zip(root).map(|(gi, ri)| gi - along * ri).collect();
    let project = |v: &mut [f64]| {
        let c: f64 = root.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(root).for_each(|(vi, ri)| *vi -= c * ri);
    };
    let apply = |v: &[f64], out: &mut [f64]| {
        d.mul_vec_into(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = vi - *o;
        }
    };
    let x = conjugate_gradient(apply, &rhs, project, 1e-13, 50 * d.dim() + 1000)?;
    Ok(rhs.iter().zip(&x).map(|(a, b)| a * b).sum())
}

/// Escape time of `S` choosing the dense spectral route for small chains and
/// the iterative solve otherwise.
pub fn escape_time_subset_auto(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    subset: &[usize],
) -> Result<f64> {
    if subset.is_empty() {
        return Err(invalid("escape time of an empty subset"));
    }
    if subset.len() == pi.len() {
        return Ok(0.0);
    }
    let d = discriminant(p);
    if p.dim() <= DENSE_SPECTRAL_LIMIT {
        escape_time_subset(&decompose(&d)?, pi, subset)
    } else {
        escape_time_solve(&d, pi, &pi.projection(subset))
    }
}

/// The extended hitting time representative `(1/eps_M) E(P, M_pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedHittingTime {
    pub value: f64,
    pub escape: f64,
    pub eps_marked: f64,
}

pub fn extended_hitting_time(
    dec: &SpectralDecomposition,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
) -> Result<ExtendedHittingTime> {
    let escape = escape_time_subset(dec, pi, marked.members())?;
    let eps_marked = pi.mass(marked.members());
    Ok(ExtendedHittingTime {
        value: escape / eps_marked,
        escape,
        eps_marked,
    })
}

pub fn extended_hitting_time_auto(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
) -> Result<ExtendedHittingTime> {
    let escape = escape_time_subset_auto(p, pi, marked.members())?;
    let eps_marked = pi.mass(marked.members());
    Ok(ExtendedHittingTime {
        value: escape / eps_marked,
        escape,
        eps_marked,
    })
}

/// Hitting time of the interpolated walk `P(s)`:
/// `sum_{k >= 2} |<lambda_k(s)|U_pi>|^2 / (1 - lambda_k(s))` with the
/// spectrum of `D(P(s))`. Equals `E(P(s), U_pi)`; its `s -> 1` limit is the
/// extended hitting time.
pub fn interpolated_hitting_time(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    s: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&s) {
        return Err(invalid(format!("s = {s} must lie in [0, 1)")));
    }
    let p_abs = make_absorbing(p, marked)?;
    let ps = interpolate(p, &p_abs, s)?;
    let pi_s = stationary_interpolated(pi, marked, s)?;
    let dec = decompose(&discriminant(&ps))?;
    let u_pi = pi_s.projection(&marked.unmarked());
    escape_time(&dec, &u_pi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub s_values: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: f64,
}

/// Extrapolates `interpolated_hitting_time` to `s = 1` by fitting
/// `a + b (1 - s)` through the two largest `s` values.
pub fn extended_hitting_time_limit(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    s_values: &[f64],
) -> Result<LimitEstimate> {
    if s_values.len() < 2 {
        return Err(invalid("need at least two s values"));
    }
    if s_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("s values must be strictly ascending"));
    }
    let values = s_values
        .iter()
        .map(|&s| interpolated_hitting_time(p, pi, marked, s))
        .collect::<Result<Vec<f64>>>()?;
    for w in values.windows(2) {
        if w[1] < w[0] * (1.0 - 1e-6) - 1e-9 {
            return Err(Error::NoConvergence {
                iterations: s_values.len(),
                residual: w[0] - w[1],
            });
        }
    }
    let k = s_values.len();
    let (h1, h2) = (1.0 - s_values[k - 2], 1.0 - s_values[k - 1]);
    let (v1, v2) = (values[k - 2], values[k - 1]);
    let slope = (v1 - v2) / (h1 - h2);
    let limit = v2 - slope * h2;
    Ok(LimitEstimate {
        s_values: s_values.to_vec(),
        values,
        limit,
    })
}

pub const DEFAULT_LIMIT_S: [f64; 4] = [0.9, 0.99, 0.999, 0.9999];

/// All hitting-time quantities of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimes {
    pub ht: f64,
    pub ht_linear: f64,
    pub ht_eff: usize,
    pub eht: f64,
    pub escape: f64,
    pub eps_marked: f64,
    /// Only available on the dense spectral route.
    pub gap: Option<f64>,
}

pub fn hitting_times(
    p: &WalkMatrix,
    pi: &StationaryDistribution,
    marked: &MarkedSet,
) -> Result<HittingTimes> {
    let ht = hitting_time_spectral(p, pi, marked)?;
    let ht_linear = hitting_time_linear(p, pi, marked)?;
    let cap = 100 * (ht_linear.ceil() as usize).max(1);
    let ht_eff = effective_hitting_time_with(
        p,
        pi,
        marked,
        2.0 / 3.0,
        StartDistribution::UnmarkedStationary,
        cap,
    )?;
    let (eht, gap) = if p.dim() <= DENSE_SPECTRAL_LIMIT {
        let dec = decompose(&discriminant(p))?;
        (extended_hitting_time(&dec, pi, marked)?, Some(dec.gap()))
    } else {
        (extended_hitting_time_auto(p, pi, marked)?, None)
    };
    Ok(HittingTimes {
        ht,
        ht_linear,
        ht_eff,
        eht: eht.value,
        escape: eht.escape,
        eps_marked: eht.eps_marked,
        gap,
    })
}
