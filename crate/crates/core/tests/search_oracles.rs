use torus_walk::calibration::Constants;
use torus_walk::graph::{build_grid, build_torus, partition_torus};
use torus_walk::locality::subgrid_coverage;
use torus_walk::markov::{stationary, walk_from_graph, MarkedSet};
use torus_walk::quantum::{find_via_interpolation, CostLedger};
use torus_walk::search::{
    cost_bound, k_max, run_k_sweep, run_search, solve_subgrid, verify_cost_bound, KChoice,
    OutputMode, SearchConfig, SUCCESS_BOUND,
};
use torus_walk::specs::MarkedSpec;
use torus_walk::spectral::effective_hitting_time;

fn config(n: usize, spec: MarkedSpec, k: KChoice) -> SearchConfig {
    SearchConfig {
        n,
        marked: spec.resolve(n).unwrap(),
        k,
        seed: 7,
        constants: Constants::default(),
        mode: OutputMode::Probability,
    }
}

fn h_eff(n: usize, m: &MarkedSet) -> f64 {
    let p = walk_from_graph(&build_torus(n).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    effective_hitting_time(&p, &pi, m).unwrap() as f64
}

#[test]
fn mixture_law_holds_per_k() {
    for spec in [MarkedSpec::Gap, MarkedSpec::Rows(vec![0]), MarkedSpec::Half] {
        let r = run_search(&config(16, spec, KChoice::Fixed(2))).unwrap();
        for (j, kr) in r.per_k.iter().enumerate() {
            let mix: f64 = r.subgrids.iter().map(|g| g.eps_g * g.success[j]).sum();
            assert!((mix - kr.success).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&kr.success));
        }
        let total: f64 = r.subgrids.iter().map(|g| g.eps_g).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn full_row_meets_bound() {
    let r = run_search(&config(16, MarkedSpec::Rows(vec![0]), KChoice::Random)).unwrap();
    assert!(r.best_k_success >= SUCCESS_BOUND);
    assert!(r.uniform_k_success >= SUCCESS_BOUND / k_max(256) as f64);
    assert_eq!(r.verdict, "success bound met");
}

#[test]
fn singleton_reduces_to_one_grid() {
    let n = 8;
    let r = run_search(&config(
        n,
        MarkedSpec::Cells(vec![(3, 5)]),
        KChoice::Fixed(6),
    ))
    .unwrap();
    assert_eq!(r.d, n);
    assert_eq!(r.layout.blocks, 1);
    let p = walk_from_graph(&build_grid(n).unwrap()).unwrap();
    let pi = stationary(&p).unwrap();
    let m = MarkedSet::new([3 * n + 5], n * n).unwrap();
    let mut ledger = CostLedger::default();
    let direct = find_via_interpolation(&p, &pi, &m, 1.0 / 64.0, r.finding_steps, &mut ledger)
        .unwrap()
        .success_probability;
    assert!((r.success_at(6).unwrap() - direct).abs() < 1e-12);
    assert!(direct >= 0.2);
}

#[test]
fn unmarked_block_contributes_nothing() {
    let layout = partition_torus(16, 8).unwrap();
    let m = MarkedSet::new([0, 1], 256).unwrap();
    let ks = [1, 2, 3];
    for b in 0..layout.blocks.len() {
        let (res, _) = solve_subgrid(&layout, b, &m, &ks, 20, false).unwrap();
        if b == 0 {
            assert!(res.contains_marked);
        } else {
            assert_eq!(res.success, vec![0.0; 3]);
            assert!(!res.contains_marked);
        }
    }
}

#[test]
fn sweep_combines_and_accounts() {
    let cfg = config(16, MarkedSpec::Cells(vec![(4, 4), (4, 5)]), KChoice::Sweep);
    let sweep = run_k_sweep(&cfg).unwrap();
    let expected = 1.0 - sweep.per_k.iter().map(|r| 1.0 - r.success).product::<f64>();
    assert!((sweep.sweep_success.unwrap() - expected).abs() < 1e-12);
    assert!(sweep.sweep_success.unwrap() >= SUCCESS_BOUND);
    assert!(sweep.sweep_success.unwrap() >= sweep.best_k_success - 1e-12);
    let single = run_search(&SearchConfig {
        k: KChoice::Fixed(1),
        ..cfg
    })
    .unwrap();
    let kmax = k_max(256) as u64;
    assert!(sweep.steps() <= kmax * single.steps());
    assert!(sweep.ledger.setup <= kmax * single.ledger.setup);
}

#[test]
fn reports_are_deterministic() {
    let mut cfg = config(16, MarkedSpec::Random { m: 6, seed: 3 }, KChoice::Random);
    cfg.mode = OutputMode::Sampling;
    let a = serde_json::to_string(&run_search(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_search(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sampling_mode_reports_a_vertex() {
    let mut hits = 0;
    for seed in 0..20 {
        let mut cfg = config(16, MarkedSpec::Half, KChoice::Random);
        cfg.mode = OutputMode::Sampling;
        cfg.seed = seed;
        let r = run_search(&cfg).unwrap();
        let s = r.sample.as_ref().unwrap();
        assert_eq!(s.vertex, s.row * 16 + s.col);
        assert_eq!(s.marked, cfg.marked.contains(s.vertex));
        let verdict = if s.marked {
            "found marked vertex"
        } else {
            "unsuccessful search"
        };
        assert_eq!(r.verdict, verdict);
        hits += usize::from(s.marked);
    }
    assert!(hits > 0);
}

#[test]
fn fixed_k_must_be_in_range() {
    assert!(run_search(&config(8, MarkedSpec::Half, KChoice::Fixed(0))).is_err());
    assert!(run_search(&config(8, MarkedSpec::Half, KChoice::Fixed(7))).is_err());
}

#[test]
fn singleton_cost_ratio_is_size_stable() {
    let c3 = Constants::default().c3;
    let ratios: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let cfg = config(n, MarkedSpec::Cells(vec![(0, 0)]), KChoice::Sweep);
            let r = run_search(&cfg).unwrap();
            verify_cost_bound(&r, c3, h_eff(n, &cfg.marked)).ratio
        })
        .collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 2.0, "{ratios:?}");
}

#[test]
fn dense_family_uses_h_branch() {
    let c3 = Constants::default().c3;
    let cfg = config(32, MarkedSpec::Gap, KChoice::Fixed(1));
    let r = run_search(&cfg).unwrap();
    let check = verify_cost_bound(&r, c3, h_eff(32, &cfg.marked));
    assert!(check.h_branch);
    assert!(check.ratio <= 1.0, "{check:?}");
    let nn = 1024f64;
    assert!((r.steps() as f64) < (nn * nn.ln()).sqrt());
}

#[test]
fn bound_never_exceeds_n_branch() {
    for h in [1.0, 10.0, 1e3, 1e6, 1e9] {
        let (b, _) = cost_bound(2.0, h, 1024);
        assert!(b <= 2.0 * (1024f64 * 1024f64.ln()).sqrt() + 1e-9);
    }
}

#[test]
fn marked_subgrid_mass_covers_walk_hits() {
    let cfg = config(16, MarkedSpec::Gap, KChoice::Fixed(1));
    let r = run_search(&cfg).unwrap();
    let p_g: f64 = r
        .subgrids
        .iter()
        .filter(|g| g.contains_marked)
        .map(|g| g.eps_g)
        .sum();
    let cov = subgrid_coverage(16, &cfg.marked, r.h_tilde, 50_000, 2).unwrap();
    assert_eq!(cov.d, r.d);
    assert!(cov.qualifies());
    assert!(p_g >= cov.p_hat / 5.0 - 3.0 * cov.sigma_p);
}
