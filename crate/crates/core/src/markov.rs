//! Column-stochastic walk matrices and the chain-level operations on them:
//! stationary distribution, reversibility and ergodicity checks, absorbing
//! and interpolated walks, and the discriminant.
//!
//! Convention: entry `(y, x)` is the probability of moving from state `x` to
//! state `y`. Column `x` is therefore the outgoing distribution of `x`, and
//! every column sums to one. Storage is compressed by column.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;

pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const REVERSIBLE_TOL: f64 = 1e-10;

const STATIONARY_RESIDUAL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WalkKind {
    Plain,
    Absorbing,
    Interpolated { s: f64 },
}

/// Column-stochastic transition matrix in compressed-column form.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkMatrix {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    kind: WalkKind,
}

impl WalkMatrix {
    /// Builds from per-column `(row, value)` lists. Zero entries are dropped,
    /// duplicate rows within a column are summed.
    pub fn from_columns(columns: Vec<Vec<(usize, f64)>>, kind: WalkKind) -> Result<WalkMatrix> {
        let dim = columns.len();
        if dim == 0 {
            return Err(invalid("empty matrix"));
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for (x, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(|&(y, _)| y);
            let mut sum = 0.0;
            let mut last: Option<usize> = None;
            for (y, v) in col {
                if y >= dim {
                    return Err(invalid(format!("row {y} out of range in column {x}")));
                }
                if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&v) || !v.is_finite() {
                    return Err(invalid(format!("entry ({y},{x}) = {v} outside [0,1]")));
                }
                sum += v;
                if v == 0.0 {
                    continue;
                }
                if last == Some(y) {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(y);
                    values.push(v);
                    last = Some(y);
                }
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { column: x, sum });
            }
            col_ptr.push(row_idx.len());
        }
        Ok(WalkMatrix {
            dim,
            col_ptr,
            row_idx,
            values,
            kind,
        })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<WalkMatrix> {
        if m.nrows() != m.ncols() {
            return Err(invalid("matrix must be square"));
        }
        let columns = (0..m.ncols())
            .map(|x| {
                (0..m.nrows())
                    .filter(|&y| m[(y, x)] != 0.0)
                    .map(|y| (y, m[(y, x)]))
                    .collect()
            })
            .collect();
        WalkMatrix::from_columns(columns, WalkKind::Plain)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzero entries `(row, value)` of column `x`.
    pub fn column(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[x]..self.col_ptr[x + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry `(y, x)`: probability of the move `x -> y`.
    pub fn get(&self, y: usize, x: usize) -> f64 {
        let range = self.col_ptr[x]..self.col_ptr[x + 1];
        match self.row_idx[range.clone()].binary_search(&y) {
            Ok(i) => self.values[range.start + i],
            Err(_) => 0.0,
        }
    }

    /// All nonzero entries as `(row, col, value)`, column by column.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |x| self.column(x).map(move |(y, v)| (y, x, v)))
    }

    /// `P v`: propagates a distribution one step.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, &vx) in v.iter().enumerate() {
            if vx == 0.0 {
                continue;
            }
            for (y, p) in self.column(x) {
                out[y] += p * vx;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (y, x, v) in self.triplets() {
            m[(y, x)] = v;
        }
        m
    }

    /// Maximum deviation of a column sum from one.
    pub fn stochasticity_error(&self) -> f64 {
        (0..self.dim)
            .map(|x| (self.column(x).map(|(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Support graph: `out[x]` lists the states reachable from `x` in one step.
    fn successors(&self) -> Vec<Vec<usize>> {
        (0..self.dim)
            .map(|x| self.column(x).map(|(y, _)| y).collect())
            .collect()
    }
}

/// Random walk on a graph: entry `(v, u)` is `mult(u -> v) / outdeg(u)`.
pub fn walk_from_graph(g: &Graph) -> Result<WalkMatrix> {
    let mut columns = vec![Vec::new(); g.n_vertices];
    for (u, col) in columns.iter_mut().enumerate() {
        let deg = g.out_degree(u);
        if deg == 0 {
            return Err(Error::ZeroOutDegree(u));
        }
        let deg = f64::from(deg);
        col.extend(
            g.out_edges(u)
                .map(|e| (e.target, f64::from(e.multiplicity) / deg)),
        );
    }
    WalkMatrix::from_columns(columns, WalkKind::Plain)
}

/// Stationary distribution `pi` with `P pi = pi`, plus its entrywise square
/// root `|pi>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl StationaryDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<StationaryDistribution> {
        if probs.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(invalid("stationary probabilities must be positive"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(invalid(format!("stationary probabilities sum to {total}")));
        }
        let amplitudes = probs.iter().map(|p| p.sqrt()).collect();
        Ok(StationaryDistribution { probs, amplitudes })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Stationary mass of a subset.
    pub fn mass(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&x| self.probs[x]).sum()
    }

    /// `|S_pi>`: the normalized projection of `|pi>` onto `subset`; the zero
    /// vector for an empty subset.
    pub fn projection(&self, subset: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        let eps = self.mass(subset);
        if eps == 0.0 {
            return g;
        }
        let scale = eps.sqrt().recip();
        for &x in subset {
            g[x] = self.amplitudes[x] * scale;
        }
        g
    }

    /// `|| P pi - pi ||_inf`.
    pub fn residual(&self, p: &WalkMatrix) -> f64 {
        p.apply(&self.probs)
            .iter()
            .zip(&self.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Power iteration on the lazy chain `(P + I)/2`, which shares the stationary
/// distribution of `P` and is aperiodic whenever `P` is irreducible.
pub fn stationary(p: &WalkMatrix) -> Result<StationaryDistribution> {
    let n = p.dim();
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..STATIONARY_MAX_ITER {
        p.apply_into(&v, &mut next);
        // The check uses P itself; the lazy update only drives convergence.
        residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= STATIONARY_RESIDUAL {
            let total: f64 = v.iter().sum();
            let probs: Vec<f64> = v.iter().map(|x| x / total).collect();
            if probs.iter().any(|&x| x <= 0.0) {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual,
                });
            }
            return StationaryDistribution::from_probs(probs);
        }
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = 0.5 * (*vi + ni);
        }
        if it % 64 == 0 {
            let total: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= total);
        }
    }
    Err(Error::NoConvergence {
        iterations: STATIONARY_MAX_ITER,
        residual,
    })
}

/// Closed-form stationary distribution of the interpolated walk
/// `(1-s) P + s P'` for a reversible `P`: unmarked weights are unchanged and
/// marked weights scale by `1/(1-s)`, then everything is renormalized.
pub fn stationary_interpolated(
    pi: &StationaryDistribution,
    marked: &MarkedSet,
    s: f64,
) -> Result<StationaryDistribution> {
    if !(0.0..1.0).contains(&s) {
        return Err(invalid(format!("s = {s} must lie in [0, 1)")));
    }
    let mut w = pi.probs.clone();
    for &m in marked.members() {
        w[m] /= 1.0 - s;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    StationaryDistribution::from_probs(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversibilityCheck {
    pub reversible: bool,
    pub max_violation: f64,
}

/// Detailed balance `P_yx pi_x = P_xy pi_y`, up to `REVERSIBLE_TOL`.
pub fn check_reversible(p: &WalkMatrix, pi: &StationaryDistribution) -> ReversibilityCheck {
    let mut worst = 0.0f64;
    for (y, x, v) in p.triplets() {
        let flow = v * pi.probs[x];
        let back = p.get(x, y) * pi.probs[y];
        worst = worst.max((flow - back).abs());
    }
    ReversibilityCheck {
        reversible: worst <= REVERSIBLE_TOL,
        max_violation: worst,
    }
}

fn reachable_all(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected support graph: the gcd over edges
/// `u -> v` of `level(u) + 1 - level(v)` for BFS levels from state 0.
fn period(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            let diff = (level[u] + 1).abs_diff(level[v]);
            g = gcd(g, diff);
        }
    }
    g
}

/// Strong connectivity plus aperiodicity of the support graph.
pub fn check_ergodic(p: &WalkMatrix) -> bool {
    let fwd = p.successors();
    let mut bwd = vec![Vec::new(); p.dim()];
    for (u, outs) in fwd.iter().enumerate() {
        for &v in outs {
            bwd[v].push(u);
        }
    }
    reachable_all(&fwd) && reachable_all(&bwd) && period(&fwd) == 1
}

/// Nonempty proper subset of the state space, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedSet {
    members: Vec<usize>,
    universe: usize,
}

impl MarkedSet {
    pub fn new(members: impl IntoIterator<Item = usize>, universe: usize) -> Result<MarkedSet> {
        let set: BTreeSet<usize> = members.into_iter().collect();
        if set.is_empty() {
            return Err(invalid("marked set must be nonempty"));
        }
        if let Some(&max) = set.iter().next_back() {
            if max >= universe {
                return Err(invalid(format!(
                    "marked state {max} out of range {universe}"
                )));
            }
        }
        if set.len() == universe {
            return Err(invalid("marked set must be a proper subset"));
        }
        Ok(MarkedSet {
            members: set.into_iter().collect(),
            universe,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    /// Complement `U = X \ M`.
    pub fn unmarked(&self) -> Vec<usize> {
        (0..self.universe).filter(|&x| !self.contains(x)).collect()
    }

    /// Membership mask over the universe.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.universe];
        for &x in &self.members {
            m[x] = true;
        }
        m
    }
}

/// `P'`: marked columns become unit vectors (self-loops).
pub fn make_absorbing(p: &WalkMatrix, marked: &MarkedSet) -> Result<WalkMatrix> {
    check_universe(p, marked)?;
    let columns = (0..p.dim())
        .map(|x| {
            if marked.contains(x) {
                vec![(x, 1.0)]
            } else {
                p.column(x).collect()
            }
        })
        .collect();
    WalkMatrix::from_columns(columns, WalkKind::Absorbing)
}

/// `P(s) = (1 - s) P + s P'`.
pub fn interpolate(p: &WalkMatrix, p_abs: &WalkMatrix, s: f64) -> Result<WalkMatrix> {
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid(format!(
            "interpolation parameter s = {s} outside [0, 1]"
        )));
    }
    if p.dim() != p_abs.dim() {
        return Err(invalid("dimension mismatch"));
    }
    if s == 0.0 {
        let mut out = p.clone();
        out.kind = WalkKind::Interpolated { s };
        return Ok(out);
    }
    if s == 1.0 {
        let mut out = p_abs.clone();
        out.kind = WalkKind::Interpolated { s };
        return Ok(out);
    }
    let columns = (0..p.dim())
        .map(|x| {
            p.column(x)
                .map(|(y, v)| (y, (1.0 - s) * v))
                .chain(p_abs.column(x).map(|(y, v)| (y, s * v)))
                .collect()
        })
        .collect();
    WalkMatrix::from_columns(columns, WalkKind::Interpolated { s })
}

fn check_universe(p: &WalkMatrix, marked: &MarkedSet) -> Result<()> {
    if marked.universe() != p.dim() {
        return Err(invalid(format!(
            "marked set over {} states used with a {}-state chain",
            marked.universe(),
            p.dim()
        )));
    }
    Ok(())
}

/// `D(P) = sqrt(P o P^T)` in compressed-column form. Symmetric, so columns
/// double as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminant {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Discriminant {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[x]..self.col_ptr[x + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        let range = self.col_ptr[x]..self.col_ptr[x + 1];
        match self.row_idx[range.clone()].binary_search(&y) {
            Ok(i) => self.values[range.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, &vx) in v.iter().enumerate() {
            if vx == 0.0 {
                continue;
            }
            for (y, d) in self.column(x) {
                out[y] += d * vx;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for x in 0..self.dim {
            for (y, v) in self.column(x) {
                m[(y, x)] = v;
            }
        }
        m
    }

    /// Dense principal submatrix on `states` (in the given order).
    pub fn restricted_dense(&self, states: &[usize]) -> DMatrix<f64> {
        let mut index = vec![usize::MAX; self.dim];
        for (i, &s) in states.iter().enumerate() {
            index[s] = i;
        }
        let mut m = DMatrix::zeros(states.len(), states.len());
        for (j, &x) in states.iter().enumerate() {
            for (y, v) in self.column(x) {
                if index[y] != usize::MAX {
                    m[(index[y], j)] = v;
                }
            }
        }
        m
    }

    pub fn symmetry_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.dim {
            for (y, v) in self.column(x) {
                worst = worst.max((v - self.get(x, y)).abs());
            }
        }
        worst
    }
}

pub fn discriminant(p: &WalkMatrix) -> Discriminant {
    let dim = p.dim();
    let mut col_ptr = Vec::with_capacity(dim + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    col_ptr.push(0);
    for x in 0..dim {
        for (y, v) in p.column(x) {
            let back = p.get(x, y);
            if back > 0.0 {
                row_idx.push(y);
                values.push((v * back).sqrt());
            }
        }
        col_ptr.push(row_idx.len());
    }
    Discriminant {
        dim,
        col_ptr,
        row_idx,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_grid, build_torus};

    fn two_state() -> WalkMatrix {
        WalkMatrix::from_dense(&DMatrix::from_element(2, 2, 0.5)).unwrap()
    }

    #[test]
    fn torus_walk_entries() {
        let p = walk_from_graph(&build_torus(3).unwrap()).unwrap();
        assert!(p.triplets().all(|(_, _, v)| v == 0.25));
        assert!(p.stochasticity_error() < STOCHASTIC_TOL);
        let p = walk_from_graph(&build_torus(2).unwrap()).unwrap();
        assert!(p.triplets().all(|(_, _, v)| v == 0.5));
    }

    #[test]
    fn grid_corner_column() {
        let p = walk_from_graph(&build_grid(3).unwrap()).unwrap();
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(3, 0), 0.25);
        assert_eq!(p.get(1, 0), 0.25);
        assert_eq!(p.column(0).count(), 3);
    }

    #[test]
    fn rejects_zero_out_degree() {
        let g = Graph::from_edge_list(
            2,
            [(0, 1)],
            vec![(0, 0), (0, 1)],
            crate::graph::GraphKind::Generic,
            1,
            2,
        )
        .unwrap();
        assert!(matches!(walk_from_graph(&g), Err(Error::ZeroOutDegree(1))));
    }

    #[test]
    fn rejects_non_stochastic() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.5]);
        assert!(matches!(
            WalkMatrix::from_dense(&m),
            Err(Error::NotStochastic { column: 0, .. })
        ));
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary(&two_state()).unwrap();
        assert!((pi.probs[0] - 0.5).abs() < 1e-12);
        for p in [
            walk_from_graph(&build_torus(16).unwrap()).unwrap(),
            walk_from_graph(&build_torus(6).unwrap()).unwrap(),
            walk_from_graph(&build_grid(8).unwrap()).unwrap(),
        ] {
            let pi = stationary(&p).unwrap();
            let u = 1.0 / p.dim() as f64;
            assert!(pi.probs.iter().all(|x| (x - u).abs() < 1e-12));
            assert!(pi.residual(&p) <= FIXED_POINT_TOL);
        }
    }

    #[test]
    fn grid_uniform_is_fixed_point() {
        let p = walk_from_graph(&build_grid(8).unwrap()).unwrap();
        let u = vec![1.0 / 64.0; 64];
        let pu = p.apply(&u);
        assert!(pu.iter().all(|x| (x - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn stationary_of_nonuniform_chain() {
        let m = DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.2, 0.7]);
        let p = WalkMatrix::from_dense(&m).unwrap();
        let pi = stationary(&p).unwrap();
        // 0.2 pi_0 = 0.3 pi_1
        assert!((pi.probs[0] - 0.6).abs() < 1e-10);
        assert!(pi.residual(&p) < FIXED_POINT_TOL);
    }

    #[test]
    fn reversibility() {
        let torus = walk_from_graph(&build_torus(4).unwrap()).unwrap();
        let pi = stationary(&torus).unwrap();
        assert!(check_reversible(&torus, &pi).reversible);

        let grid = walk_from_graph(&build_grid(5).unwrap()).unwrap();
        let pi = stationary(&grid).unwrap();
        assert!(check_reversible(&grid, &pi).reversible);

        let mut cyc = DMatrix::zeros(3, 3);
        for x in 0..3 {
            cyc[((x + 1) % 3, x)] = 1.0;
        }
        let cyc = WalkMatrix::from_dense(&cyc).unwrap();
        let pi = StationaryDistribution::from_probs(vec![1.0 / 3.0; 3]).unwrap();
        let check = check_reversible(&cyc, &pi);
        assert!(!check.reversible);
        assert!((check.max_violation - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ergodicity() {
        assert!(check_ergodic(
            &walk_from_graph(&build_grid(4).unwrap()).unwrap()
        ));
        for n in [2, 4, 6, 8] {
            assert!(!check_ergodic(
                &walk_from_graph(&build_torus(n).unwrap()).unwrap()
            ));
        }
        for n in [3, 5, 7] {
            assert!(check_ergodic(
                &walk_from_graph(&build_torus(n).unwrap()).unwrap()
            ));
        }
        // disconnected: identity
        let id = WalkMatrix::from_dense(&DMatrix::identity(3, 3)).unwrap();
        assert!(!check_ergodic(&id));
    }

    #[test]
    fn absorbing_examples() {
        let m = MarkedSet::new([0], 2).unwrap();
        let pa = make_absorbing(&two_state(), &m).unwrap();
        assert_eq!(pa.get(0, 0), 1.0);
        assert_eq!(pa.get(1, 0), 0.0);
        assert_eq!(pa.get(0, 1), 0.5);
        assert_eq!(pa.get(1, 1), 0.5);

        let t = walk_from_graph(&build_torus(4).unwrap()).unwrap();
        let m = MarkedSet::new([0], 16).unwrap();
        let ta = make_absorbing(&t, &m).unwrap();
        let col: Vec<_> = ta.column(0).collect();
        assert_eq!(col, vec![(0, 1.0)]);
        assert!(ta.stochasticity_error() < STOCHASTIC_TOL);
        for x in 1..16 {
            assert_eq!(
                ta.column(x).collect::<Vec<_>>(),
                t.column(x).collect::<Vec<_>>()
            );
        }
        let again = make_absorbing(&ta, &m).unwrap();
        assert_eq!(again, ta);
    }

    #[test]
    fn marked_set_validation() {
        assert!(MarkedSet::new([], 3).is_err());
        assert!(MarkedSet::new([0, 1, 2], 3).is_err());
        assert!(MarkedSet::new([3], 3).is_err());
        let m = MarkedSet::new([2, 0, 2], 4).unwrap();
        assert_eq!(m.members(), &[0, 2]);
        assert_eq!(m.unmarked(), vec![1, 3]);
    }

    #[test]
    fn interpolation_endpoints() {
        let p = two_state();
        let pa = make_absorbing(&p, &MarkedSet::new([0], 2).unwrap()).unwrap();
        let p0 = interpolate(&p, &pa, 0.0).unwrap();
        assert_eq!(p0.to_dense(), p.to_dense());
        let p1 = interpolate(&p, &pa, 1.0).unwrap();
        assert_eq!(p1.to_dense(), pa.to_dense());
        let half = interpolate(&p, &pa, 0.5).unwrap();
        assert_eq!(half.get(0, 0), 0.75);
        assert_eq!(half.get(1, 0), 0.25);
        assert!(interpolate(&p, &pa, 1.5).is_err());
        assert!(interpolate(&p, &pa, -0.1).is_err());
    }

    #[test]
    fn interpolated_stationary_closed_form() {
        let p = walk_from_graph(&build_grid(4).unwrap()).unwrap();
        let m = MarkedSet::new([0, 5], 16).unwrap();
        let pa = make_absorbing(&p, &m).unwrap();
        let pi = stationary(&p).unwrap();
        for s in [0.0, 0.3, 0.9] {
            let ps = interpolate(&p, &pa, s).unwrap();
            let closed = stationary_interpolated(&pi, &m, s).unwrap();
            assert!(closed.residual(&ps) < 1e-14);
            let iterated = stationary(&ps).unwrap();
            for (a, b) in closed.probs.iter().zip(&iterated.probs) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn discriminant_examples() {
        let t = walk_from_graph(&build_torus(4).unwrap()).unwrap();
        assert_eq!(discriminant(&t).to_dense(), t.to_dense());

        let pa = make_absorbing(&two_state(), &MarkedSet::new([0], 2).unwrap()).unwrap();
        let d = discriminant(&pa).to_dense();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn discriminant_fixes_sqrt_pi() {
        let m = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.5, 0.6, 0.5, 0.0, 0.2, 0.5]);
        let p = WalkMatrix::from_dense(&m).unwrap();
        let pi = stationary(&p).unwrap();
        assert!(check_reversible(&p, &pi).reversible);
        let d = discriminant(&p);
        assert!(d.symmetry_error() < 1e-12);
        let dv = d.mul_vec(&pi.amplitudes);
        for (a, b) in dv.iter().zip(&pi.amplitudes) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
