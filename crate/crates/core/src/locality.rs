//! Monte Carlo locality experiments: random walks on the infinite line and
//! grid stay within `ceil(4 sqrt(T))` of their start, and on the torus a
//! random sub-grid of the `d = 2 ceil(4 sqrt(T))` partition is marked with
//! probability comparable to the walk's own hitting probability.
//!
//! Trials run in fixed chunks; chunk `i` uses `ChaCha8Rng` seeded with the
//! experiment seed on stream `i`, so results do not depend on the number of
//! worker threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{partition_torus, PartitionLayout};
use crate::markov::{MarkedSet, WalkMatrix};

pub const CHUNK: usize = 8192;
/// Two-sided 99% normal quantile used for Wilson bounds.
pub const Z_99: f64 = 2.575_829_303_548_900_4;
pub const LINE_FAILURE: f64 = 1.0 / 745.0;
pub const GRID_FAILURE: f64 = 2.0 / 745.0;
pub const LEMMA8_MIN_P: f64 = 1.0 / 74.0;

/// `ceil(4 sqrt(T))`.
pub fn locality_radius(t: usize) -> usize {
    (4.0 * (t as f64).sqrt()).ceil() as usize
}

/// Lower end of the Wilson score interval.
pub fn wilson_lower(successes: u64, trials: u64, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).max(0.0)
}

/// Binomial standard error `sqrt(p (1 - p) / trials)`.
pub fn std_error(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `trials` independent trials in seeded chunks and sums the counters.
fn run_chunked<const K: usize>(
    trials: u64,
    seed: u64,
    trial: impl Fn(&mut ChaCha8Rng) -> [bool; K] + Sync,
) -> [u64; K] {
    let chunks = (trials as usize).div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = chunk_rng(seed, i);
            let len = CHUNK.min(trials as usize - i * CHUNK);
            let mut counts = [0u64; K];
            for _ in 0..len {
                for (c, hit) in counts.iter_mut().zip(trial(&mut rng)) {
                    *c += u64::from(hit);
                }
            }
            counts
        })
        .reduce(
            || [0u64; K],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    /// `+-1` with probability 1/2 each.
    Line,
    /// One of four unit moves with probability 1/4 each.
    Grid,
}

/// A sampled walk. For a chain the states are indices `(x, 0)`; for the
/// lattices they are integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkTrajectory {
    pub start: (i64, i64),
    pub steps: Vec<(i64, i64)>,
    /// Largest per-axis deviation from the start.
    pub max_displacement: (u64, u64),
}

fn lattice_move(lattice: Lattice, rng: &mut ChaCha8Rng) -> (i64, i64) {
    match lattice {
        Lattice::Line => (if rng.random::<bool>() { 1 } else { -1 }, 0),
        Lattice::Grid => match rng.random_range(0..4u8) {
            0 => (1, 0),
            1 => (-1, 0),
            2 => (0, 1),
            _ => (0, -1),
        },
    }
}

fn trajectory(start: (i64, i64), steps: Vec<(i64, i64)>) -> WalkTrajectory {
    let mut max = (0u64, 0u64);
    for &(x, y) in &steps {
        max.0 = max.0.max(x.abs_diff(start.0));
        max.1 = max.1.max(y.abs_diff(start.1));
    }
    WalkTrajectory {
        start,
        steps,
        max_displacement: max,
    }
}

/// `T` steps on the infinite line or grid from the origin.
pub fn sample_lattice_walk(lattice: Lattice, t: usize, seed: u64) -> WalkTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = (0i64, 0i64);
    let steps = (0..t)
        .map(|_| {
            let (dx, dy) = lattice_move(lattice, &mut rng);
            pos = (pos.0 + dx, pos.1 + dy);
            pos
        })
        .collect();
    trajectory((0, 0), steps)
}

/// `T` steps of the chain `P` from `start`, drawn from its columns.
/// Displacements are measured on state indices.
pub fn sample_walk(p: &WalkMatrix, start: usize, t: usize, seed: u64) -> Result<WalkTrajectory> {
    if start >= p.dim() {
        return Err(invalid(format!("start {start} outside 0..{}", p.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = start;
    let mut steps = Vec::with_capacity(t);
    for _ in 0..t {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = None;
        let mut last = x;
        for (y, v) in p.column(x) {
            acc += v;
            last = y;
            if u < acc {
                next = Some(y);
                break;
            }
        }
        x = next.unwrap_or(last);
        steps.push((x as i64, 0));
    }
    Ok(trajectory((start as i64, 0), steps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub lattice: Lattice,
    pub t: usize,
    pub trials: u64,
    pub seed: u64,
    pub threshold: usize,
    pub localized: u64,
    pub localized_fraction: f64,
    pub wilson_low: f64,
    /// Fraction whose final position is beyond the threshold on some axis.
    pub end_beyond_fraction: f64,
    /// Bound the localized fraction must clear.
    pub required: f64,
    pub passed: bool,
}

/// Fraction of lattice walks staying within `ceil(4 sqrt(T))` on every axis.
pub fn localization(lattice: Lattice, t: usize, trials: u64, seed: u64) -> LocalityReport {
    let k = locality_radius(t) as i64;
    let [localized, end_beyond] = run_chunked(trials, seed, |rng| {
        let (mut x, mut y) = (0i64, 0i64);
        let mut inside = true;
        for _ in 0..t {
            let (dx, dy) = lattice_move(lattice, rng);
            x += dx;
            y += dy;
            if x.abs() > k || y.abs() > k {
                inside = false;
            }
        }
        [inside, x.abs() > k || y.abs() > k]
    });
    let fraction = localized as f64 / trials.max(1) as f64;
    let low = wilson_lower(localized, trials, Z_99);
    let required = 1.0
        - match lattice {
            Lattice::Line => LINE_FAILURE,
            Lattice::Grid => GRID_FAILURE,
        };
    LocalityReport {
        lattice,
        t,
        trials,
        seed,
        threshold: k as usize,
        localized,
        localized_fraction: fraction,
        wilson_low: low,
        end_beyond_fraction: end_beyond as f64 / trials.max(1) as f64,
        required,
        passed: low >= required,
    }
}

pub fn line_localization(t: usize, trials: u64, seed: u64) -> LocalityReport {
    localization(Lattice::Line, t, trials, seed)
}

pub fn grid_localization(t: usize, trials: u64, seed: u64) -> LocalityReport {
    localization(Lattice::Grid, t, trials, seed)
}

/// Tail bound `2 exp(-k^2 / 2T)` on the line's final distance.
pub fn azuma_tail(t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let k = locality_radius(t) as f64;
    2.0 * (-k * k / (2.0 * t as f64)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub trials: u64,
    pub seed: u64,
    /// Walk of `T` steps from `pi` visits `M`.
    pub p_hat: f64,
    /// ... and is localized.
    pub p_ml: f64,
    /// Localized and visits a sub-grid containing a marked vertex.
    pub p_gl: f64,
    /// Exact `pi`-mass of sub-grids containing a marked vertex.
    pub p_g: f64,
    pub sigma_p: f64,
    pub sigma_ml: f64,
    pub sigma_gl: f64,
}

impl CoverageReport {
    /// `p_G >= p/5 - 3 sigma(p)`.
    pub fn lemma_holds(&self) -> bool {
        self.p_g >= self.p_hat / 5.0 - 3.0 * self.sigma_p
    }

    /// `p - 2/745 <= p_ml <= p_Gl <= 4 p_G`, each within three standard errors.
    pub fn chain_holds(&self) -> bool {
        let tol_ml = 3.0 * (self.sigma_p + self.sigma_ml);
        let tol_gl = 3.0 * (self.sigma_ml + self.sigma_gl);
        self.p_hat - GRID_FAILURE <= self.p_ml + tol_ml
            && self.p_ml <= self.p_gl + tol_gl
            && self.p_gl <= 4.0 * self.p_g + 3.0 * self.sigma_gl
    }

    pub fn qualifies(&self) -> bool {
        self.p_hat >= LEMMA8_MIN_P
    }
}

/// `pi`-mass of the blocks that contain a marked vertex (uniform `pi`).
pub fn marked_block_mass(layout: &PartitionLayout, marked: &MarkedSet) -> (Vec<bool>, f64) {
    let mut flagged = vec![false; layout.blocks.len()];
    for &m in marked.members() {
        flagged[layout.block_of[m]] = true;
    }
    let nn = (layout.n * layout.n) as f64;
    let mass = layout
        .blocks
        .iter()
        .zip(&flagged)
        .filter(|(_, &f)| f)
        .map(|(b, _)| b.len() as f64 / nn)
        .sum();
    (flagged, mass)
}

/// Walks of `T` steps on the `n x n` torus from a uniform start, against the
/// `d = 2 ceil(4 sqrt(T))` partition (clamped to `n`).
pub fn subgrid_coverage(
    n: usize,
    marked: &MarkedSet,
    t: usize,
    trials: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if marked.universe() != n * n {
        return Err(invalid("marked set does not match the torus size"));
    }
    let k = locality_radius(t) as i64;
    let d = (2 * k as usize).clamp(1, n);
    let layout = partition_torus(n, d)?;
    let (flagged, p_g) = marked_block_mass(&layout, marked);
    let mask = marked.mask();
    let ni = n as i64;
    let [hit, hit_local, block_local] = run_chunked(trials, seed, |rng| {
        let start = rng.random_range(0..n * n);
        let (r0, c0) = ((start / n) as i64, (start % n) as i64);
        let (mut dr, mut dc) = (0i64, 0i64);
        let mut visits = mask[start];
        let mut visits_block = flagged[layout.block_of[start]];
        let mut inside = true;
        for _ in 0..t {
            let (x, y) = lattice_move(Lattice::Grid, rng);
            dr += x;
            dc += y;
            if dr.abs() > k || dc.abs() > k {
                inside = false;
            }
            let v = ((r0 + dr).rem_euclid(ni) * ni + (c0 + dc).rem_euclid(ni)) as usize;
            visits |= mask[v];
            visits_block |= flagged[layout.block_of[v]];
        }
        [visits, visits && inside, visits_block && inside]
    });
    let tr = trials.max(1) as f64;
    let (p_hat, p_ml, p_gl) = (
        hit as f64 / tr,
        hit_local as f64 / tr,
        block_local as f64 / tr,
    );
    Ok(CoverageReport {
        n,
        t,
        d,
        trials,
        seed,
        p_hat,
        p_ml,
        p_gl,
        p_g,
        sigma_p: std_error(p_hat, trials),
        sigma_ml: std_error(p_ml, trials),
        sigma_gl: std_error(p_gl, trials),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_values() {
        assert_eq!(locality_radius(100), 40);
        assert_eq!(locality_radius(1), 4);
        assert_eq!(locality_radius(0), 0);
    }

    #[test]
    fn wilson_bounds() {
        assert_eq!(wilson_lower(0, 0, Z_99), 0.0);
        let low = wilson_lower(990, 1000, Z_99);
        assert!(low < 0.99 && low > 0.97);
        assert!(wilson_lower(1000, 1000, Z_99) < 1.0);
    }

    #[test]
    fn chunks_cover_all_trials() {
        let [count] = run_chunked(CHUNK as u64 * 2 + 5, 1, |_| [true]);
        assert_eq!(count, CHUNK as u64 * 2 + 5);
    }
}
