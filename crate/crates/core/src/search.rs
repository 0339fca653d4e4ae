//! Multi-marked search on the torus: estimate the effective hitting time,
//! cut the torus into sub-grids of side about `8 sqrt(h)`, and run the
//! interpolated walk inside the sub-grid picked by the stationary state.
//!
//! The superposition over sub-grids is replaced by the exact mixture over
//! them (the ancilla naming the sub-grid can be measured right after it is
//! prepared), so every success probability below is exact.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Constants;
use crate::error::{invalid, Result};
use crate::graph::{build_torus, partition_torus, subgrid_graph, PartitionLayout};
use crate::markov::{stationary, walk_from_graph, MarkedSet, StationaryDistribution};
use crate::quantum::{cap_estimate, find_via_interpolation, CostLedger, HittingEstimate};

/// Success probability of the estimator the idealized stand-in replaces.
pub const ESTIMATOR_SUCCESS: f64 = 2.0 / 3.0;
/// Best-k success the algorithm must reach.
pub const SUCCESS_BOUND: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum KChoice {
    Fixed(u32),
    /// Drawn uniformly from `1..=k_max` with the config seed.
    Random,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    #[default]
    Probability,
    /// Additionally measure one vertex with the seeded generator.
    Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n: usize,
    pub marked: MarkedSet,
    pub k: KChoice,
    pub seed: u64,
    pub constants: Constants,
    pub mode: OutputMode,
}

/// Largest exponent: `k` ranges over `1..=floor(log2 N)`.
pub fn k_max(big_n: usize) -> u32 {
    big_n.ilog2()
}

/// `d = 2 ceil(4 sqrt(h))`, clamped to `n`.
pub fn cut_parameter(h_tilde: usize, n: usize) -> usize {
    let d = 2 * (4.0 * (h_tilde as f64).sqrt()).ceil() as usize;
    d.clamp(1, n)
}

/// Finding steps per sub-grid: `ceil(c2 D sqrt(max(1, ln D)))`.
pub fn finding_steps(c2: f64, side: usize) -> usize {
    let d = side as f64;
    ((c2 * d * d.ln().max(1.0).sqrt()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgridResult {
    pub block: usize,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub eps_g: f64,
    pub marked_count: usize,
    pub contains_marked: bool,
    /// Success probability for each evaluated `k`, in the order of
    /// `SearchReport::per_k`.
    pub success: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub k: u32,
    pub eps_estimate: f64,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub vertex: usize,
    pub row: usize,
    pub col: usize,
    pub marked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub q: usize,
    pub blocks: usize,
    pub min_side: usize,
    pub max_side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub n: usize,
    pub marked_count: usize,
    pub eps_marked: f64,
    pub h_tilde: usize,
    pub estimate_capped: bool,
    pub estimator_idealized: bool,
    pub d: usize,
    pub layout: LayoutSummary,
    pub finding_steps: usize,
    pub subgrids: Vec<SubgridResult>,
    pub per_k: Vec<KResult>,
    pub best_k: u32,
    pub best_k_success: f64,
    /// Average over a uniformly random `k`.
    pub uniform_k_success: f64,
    /// `k` actually used by this run; `None` for a sweep.
    pub chosen_k: Option<u32>,
    pub chosen_k_success: Option<f64>,
    /// `1 - prod_k (1 - success_k)` for a sweep.
    pub sweep_success: Option<f64>,
    /// Best-k success times the estimator's own success probability.
    pub conditioned_success: f64,
    pub estimate_ledger: CostLedger,
    pub ledger: CostLedger,
    pub sample: Option<SampleOutcome>,
    pub verdict: String,
}

impl SearchReport {
    pub fn steps(&self) -> u64 {
        self.ledger.steps()
    }

    pub fn success_at(&self, k: u32) -> Option<f64> {
        self.per_k.iter().find(|r| r.k == k).map(|r| r.success)
    }
}

struct Prepared {
    pi: StationaryDistribution,
    estimate: HittingEstimate,
    layout: PartitionLayout,
    steps: usize,
}

fn prepare(config: &SearchConfig) -> Result<Prepared> {
    let n = config.n;
    if config.marked.universe() != n * n {
        return Err(invalid(format!(
            "marked set lives on {} vertices, torus has {}",
            config.marked.universe(),
            n * n
        )));
    }
    let p = walk_from_graph(&build_torus(n)?)?;
    let pi = stationary(&p)?;
    let estimate = cap_estimate(&p, &pi, &config.marked, n)?;
    let d = cut_parameter(estimate.h_tilde, n);
    let layout = partition_torus(n, d)?;
    let steps = finding_steps(config.constants.c2, layout.min_side());
    Ok(Prepared {
        pi,
        estimate,
        layout,
        steps,
    })
}

/// Time-averaged vertex distributions, one per evaluated `k`.
pub type SubgridDistributions = Option<Vec<Vec<f64>>>;

/// Success of the finding walk inside block `b` for every `k` in `ks`.
/// Blocks without marked vertices succeed with probability 0 and fully
/// marked blocks with probability 1, without running a walk.
pub fn solve_subgrid(
    layout: &PartitionLayout,
    b: usize,
    marked: &MarkedSet,
    ks: &[u32],
    steps: usize,
    keep_distributions: bool,
) -> Result<(SubgridResult, SubgridDistributions)> {
    let n = layout.n;
    let block = layout
        .blocks
        .get(b)
        .ok_or_else(|| invalid(format!("block index {b} out of range")))?;
    let vertices = block.vertices(n);
    let local: Vec<usize> = vertices
        .iter()
        .enumerate()
        .filter(|(_, &v)| marked.contains(v))
        .map(|(i, _)| i)
        .collect();
    let eps_g = vertices.len() as f64 / (n * n) as f64;
    let mut dists = keep_distributions.then(Vec::new);
    let success: Vec<f64> = if local.is_empty() {
        vec![0.0; ks.len()]
    } else if local.len() == vertices.len() {
        if let Some(d) = dists.as_mut() {
            let uniform = vec![1.0 / vertices.len() as f64; vertices.len()];
            d.extend(ks.iter().map(|_| uniform.clone()));
        }
        vec![1.0; ks.len()]
    } else {
        let p = walk_from_graph(&subgrid_graph(layout, b)?)?;
        let pi = stationary(&p)?;
        let m = MarkedSet::new(local.iter().copied(), vertices.len())?;
        let mut out = Vec::with_capacity(ks.len());
        for &k in ks {
            let mut scratch = CostLedger::default();
            let eps = 0.5f64.powi(k as i32);
            let found = find_via_interpolation(&p, &pi, &m, eps, steps, &mut scratch)?;
            out.push(found.success_probability);
            if let Some(d) = dists.as_mut() {
                d.push(found.vertex_distribution);
            }
        }
        out
    };
    Ok((
        SubgridResult {
            block: b,
            rows: (block.rows.start, block.rows.end),
            cols: (block.cols.start, block.cols.end),
            eps_g,
            marked_count: local.len(),
            contains_marked: !local.is_empty(),
            success,
        },
        dists,
    ))
}

fn evaluate_subgrids(
    config: &SearchConfig,
    prep: &Prepared,
    ks: &[u32],
) -> Result<Vec<(SubgridResult, SubgridDistributions)>> {
    let keep = config.mode == OutputMode::Sampling;
    (0..prep.layout.blocks.len())
        .into_par_iter()
        .map(|b| solve_subgrid(&prep.layout, b, &config.marked, ks, prep.steps, keep))
        .collect()
}

fn draw_sample(
    rng: &mut ChaCha8Rng,
    config: &SearchConfig,
    layout: &PartitionLayout,
    subgrids: &[(SubgridResult, SubgridDistributions)],
    k_index: usize,
) -> SampleOutcome {
    let n = config.n;
    let pick = |weights: &mut dyn Iterator<Item = f64>, rng: &mut ChaCha8Rng| -> usize {
        let w: Vec<f64> = weights.collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, x) in w.iter().enumerate() {
            if u < *x {
                return i;
            }
            u -= x;
        }
        w.len() - 1
    };
    let b = pick(&mut subgrids.iter().map(|(s, _)| s.eps_g), rng);
    let block = &layout.blocks[b];
    let vertices = block.vertices(n);
    let i = match &subgrids[b].1 {
        Some(dists) if !dists.is_empty() => pick(&mut dists[k_index].iter().copied(), rng),
        // No marked vertex: every outcome is an unmarked vertex of the block.
        _ => rng.random_range(0..vertices.len()),
    };
    let vertex = vertices[i];
    SampleOutcome {
        vertex,
        row: vertex / n,
        col: vertex % n,
        marked: config.marked.contains(vertex),
    }
}

fn assemble(
    config: &SearchConfig,
    prep: Prepared,
    ks: Vec<u32>,
    subgrids: Vec<(SubgridResult, SubgridDistributions)>,
) -> SearchReport {
    let big_n = config.n * config.n;
    let per_k: Vec<KResult> = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| KResult {
            k,
            eps_estimate: 0.5f64.powi(k as i32),
            success: subgrids
                .iter()
                .map(|(s, _)| s.eps_g * s.success[j])
                .sum::<f64>()
                .clamp(0.0, 1.0),
        })
        .collect();
    let best = per_k
        .iter()
        .copied()
        .fold(None::<KResult>, |acc, r| match acc {
            Some(a) if a.success >= r.success => Some(a),
            _ => Some(r),
        })
        .expect("at least one k");
    let uniform = per_k.iter().map(|r| r.success).sum::<f64>() / per_k.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (chosen_k, sweep) = match config.k {
        KChoice::Fixed(k) => (Some(k), false),
        KChoice::Random => (Some(rng.random_range(1..=k_max(big_n))), false),
        KChoice::Sweep => (None, true),
    };
    let chosen_k_success =
        chosen_k.and_then(|k| per_k.iter().find(|r| r.k == k).map(|r| r.success));
    let sweep_success = sweep.then(|| 1.0 - per_k.iter().map(|r| 1.0 - r.success).product::<f64>());

    let mut ledger = prep.estimate.ledger;
    let runs = if sweep { per_k.len() as u64 } else { 1 };
    ledger.charge_setup(runs);
    ledger.charge_steps(runs * prep.steps as u64);

    let sample = (config.mode == OutputMode::Sampling).then(|| {
        if sweep {
            // Runs k in increasing order and stops at the first marked outcome.
            let mut last = None;
            for j in 0..per_k.len() {
                let s = draw_sample(&mut rng, config, &prep.layout, &subgrids, j);
                let hit = s.marked;
                last = Some(s);
                if hit {
                    break;
                }
            }
            last.expect("k range is nonempty")
        } else {
            let k = chosen_k.expect("single run has a k");
            let j = ks.iter().position(|&x| x == k).expect("chosen k evaluated");
            draw_sample(&mut rng, config, &prep.layout, &subgrids, j)
        }
    });

    let verdict = match &sample {
        Some(s) if s.marked => "found marked vertex".to_string(),
        Some(_) => "unsuccessful search".to_string(),
        None if best.success >= SUCCESS_BOUND => "success bound met".to_string(),
        None => "success bound missed".to_string(),
    };

    let layout = &prep.layout;
    SearchReport {
        n: config.n,
        marked_count: config.marked.len(),
        eps_marked: prep.pi.mass(config.marked.members()),
        h_tilde: prep.estimate.h_tilde,
        estimate_capped: prep.estimate.capped,
        estimator_idealized: prep.estimate.idealized,
        d: layout.d,
        layout: LayoutSummary {
            q: layout.q,
            blocks: layout.blocks.len(),
            min_side: layout.min_side(),
            max_side: layout.max_side(),
        },
        finding_steps: prep.steps,
        subgrids: subgrids.into_iter().map(|(s, _)| s).collect(),
        per_k,
        best_k: best.k,
        best_k_success: best.success,
        uniform_k_success: uniform,
        chosen_k,
        chosen_k_success,
        sweep_success,
        conditioned_success: ESTIMATOR_SUCCESS * best.success,
        estimate_ledger: prep.estimate.ledger,
        ledger,
        sample,
        verdict,
    }
}

/// Runs the search once (fixed or random `k`). All `k` are evaluated so the
/// report carries best-k and uniform-k figures; the ledger charges one run.
pub fn run_search(config: &SearchConfig) -> Result<SearchReport> {
    let big_n = config.n * config.n;
    if let KChoice::Fixed(k) = config.k {
        if k < 1 || k > k_max(big_n) {
            return Err(invalid(format!(
                "k={k} outside 1..={} for N={big_n}",
                k_max(big_n)
            )));
        }
    }
    let prep = prepare(config)?;
    let ks: Vec<u32> = (1..=k_max(big_n)).collect();
    let subgrids = evaluate_subgrids(config, &prep, &ks)?;
    Ok(assemble(config, prep, ks, subgrids))
}

/// Runs every `k` in increasing order, reusing one estimate.
pub fn run_k_sweep(config: &SearchConfig) -> Result<SearchReport> {
    let cfg = SearchConfig {
        k: KChoice::Sweep,
        ..config.clone()
    };
    run_search(&cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCheck {
    pub steps: u64,
    pub h_eff: f64,
    pub bound: f64,
    pub ratio: f64,
    /// True when the `H` branch of the minimum is the smaller one.
    pub h_branch: bool,
}

/// `c3 min{ sqrt(H ln H), sqrt(N ln N) }`, with `ln` guarded below by 1.
pub fn cost_bound(c3: f64, h_eff: f64, big_n: usize) -> (f64, bool) {
    let nn = big_n as f64;
    let h_term = (h_eff * h_eff.ln().max(1.0)).sqrt();
    let n_term = (nn * nn.ln().max(1.0)).sqrt();
    (c3 * h_term.min(n_term), h_term <= n_term)
}

pub fn verify_cost_bound(report: &SearchReport, c3: f64, h_eff: f64) -> CostCheck {
    let (bound, h_branch) = cost_bound(c3, h_eff, report.n * report.n);
    let steps = report.steps();
    CostCheck {
        steps,
        h_eff,
        bound,
        ratio: steps as f64 / bound,
        h_branch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cut_parameter_clamps() {
        assert_eq!(cut_parameter(1, 64), 8);
        assert_eq!(cut_parameter(4, 64), 16);
        assert_eq!(cut_parameter(1000, 16), 16);
    }

    #[test]
    fn step_count_guard() {
        assert_eq!(finding_steps(1.0, 2), 2);
        let d = 16.0f64;
        assert_eq!(finding_steps(1.0, 16), (d * d.ln().sqrt()).ceil() as usize);
    }

    #[test]
    fn bound_takes_minimum() {
        let (b, h) = cost_bound(1.0, 2.0, 256);
        assert!(h);
        assert!((b - 2f64.sqrt()).abs() < 1e-12);
        let (b, h) = cost_bound(1.0, 1e9, 256);
        assert!(!h);
        assert!((b - (256.0 * 256f64.ln()).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn k_range() {
        assert_eq!(k_max(256), 8);
        assert_eq!(k_max(25), 4);
    }
}
