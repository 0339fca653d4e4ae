use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use torus_walk::calibration::{self, Constants};
use torus_walk::graph::partition_torus;
use torus_walk::locality::{self, Lattice};
use torus_walk::markov::{interpolate, make_absorbing, stationary, walk_from_graph, MarkedSet};
use torus_walk::search::{
    run_k_sweep, run_search, verify_cost_bound, KChoice, OutputMode, SearchConfig, SearchReport,
    SUCCESS_BOUND,
};
use torus_walk::specs::{GraphSpec, MarkedSpec};
use torus_walk::spectral::{
    effective_hitting_time, extended_hitting_time_limit, hitting_times, DEFAULT_LIMIT_S,
};
use torus_walk::verify::{run_suite, Suite, VerifyOptions};

const TOOL_VERSION: &str = concat!("twalk ", env!("CARGO_PKG_VERSION"));
const THREADS_ENV: &str = "TWALK_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "twalk",
    version,
    about = "Quantum walk search on tori and grids"
)]
struct Cli {
    /// Calibration constants file.
    #[arg(long, global = true, default_value = calibration::DEFAULT_PATH)]
    constants: PathBuf,

    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a graph and optionally its block partition.
    Build(BuildArgs),
    /// Export a walk matrix as (row, col, value) triplets.
    Dump(DumpArgs),
    /// Hitting-time quantities of one instance.
    Analyze(AnalyzeArgs),
    /// Monte Carlo locality experiments.
    Locality(LocalityArgs),
    /// Run the torus search algorithm.
    Search(SearchArgs),
    /// Size sweep of analysis and search, with a CSV table.
    Sweep(SweepArgs),
    /// Recompute the calibration constants and write them to --constants.
    Calibrate,
    /// Run an acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Serialize)]
struct BuildArgs {
    #[arg(long)]
    graph: GraphSpec,
    /// Partition a torus into blocks of side about d.
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum WalkChoice {
    Plain,
    Absorbing,
    Interpolated,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DumpFormat {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct DumpArgs {
    #[arg(long)]
    graph: GraphSpec,
    #[arg(long)]
    marked: Option<MarkedSpec>,
    #[arg(long, value_enum, default_value = "plain")]
    walk: WalkChoice,
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: DumpFormat,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    graph: GraphSpec,
    #[arg(long)]
    marked: MarkedSpec,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LocalityKind {
    Line,
    Grid,
    Coverage,
}

#[derive(Args, Debug, Serialize)]
struct LocalityArgs {
    #[arg(long, value_enum)]
    kind: LocalityKind,
    #[arg(long, default_value_t = 100)]
    t: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Torus side, coverage only.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Marked set, coverage only.
    #[arg(long, default_value = "rows:0")]
    marked: MarkedSpec,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    marked: MarkedSpec,
    /// `sweep`, `random`, or a fixed exponent.
    #[arg(long, default_value = "random", value_parser = parse_k)]
    k: KChoice,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report a sampled vertex instead of probabilities alone.
    #[arg(long)]
    sample: bool,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Comma-separated torus sides.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    sizes: Vec<usize>,
    #[arg(long)]
    marked: MarkedSpec,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV table destination.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// theorems, locality, search, determinism, all or acceptance.
    suite: String,
    #[arg(long, default_value_t = VerifyOptions::default().trials)]
    trials: u64,
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    seed: u64,
    #[arg(long)]
    n: Option<usize>,
}

fn parse_k(s: &str) -> Result<KChoice, String> {
    match s {
        "sweep" => Ok(KChoice::Sweep),
        "random" => Ok(KChoice::Random),
        other => other
            .parse()
            .map(KChoice::Fixed)
            .map_err(|_| format!("expected `sweep`, `random` or an integer, got `{other}`")),
    }
}

/// Result of one command: its resolved spec, seed, machine payload and
/// whether every asserted contract held.
struct Outcome {
    spec: Value,
    seed: Option<u64>,
    result: Value,
    summary: String,
    passed: bool,
}

#[derive(Serialize)]
struct Envelope<'a> {
    tool_version: &'a str,
    command: &'a str,
    spec: &'a Value,
    seed: Option<u64>,
    constants: &'a Constants,
    constants_hash: String,
    result: &'a Value,
}

type CliResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    if threads == 0 {
        return Err(format!("{THREADS_ENV} must be positive").into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> CliResult<bool> {
    let (name, constants, outcome) = match &cli.command {
        Command::Calibrate => {
            let cal = calibration::calibrate()?;
            cal.write(&cli.constants)?;
            let outcome = Outcome {
                spec: json!({ "path": cli.constants }),
                seed: None,
                summary: format!(
                    "calibrated c = {}, c2 = {}, c3 = {} -> {}",
                    cal.constants.c,
                    cal.constants.c2,
                    cal.constants.c3,
                    cli.constants.display()
                ),
                result: serde_json::to_value(&cal.provenance)?,
                passed: true,
            };
            ("calibrate", cal.constants, outcome)
        }
        command => {
            let constants = Constants::load_or_default(&cli.constants)?;
            let outcome = match command {
                Command::Build(a) => build(a)?,
                Command::Dump(a) => return dump(a, cli.out.as_deref()),
                Command::Analyze(a) => analyze(a)?,
                Command::Locality(a) => locality_cmd(a)?,
                Command::Search(a) => search(a, &constants)?,
                Command::Sweep(a) => sweep(a, &constants)?,
                Command::Verify(a) => verify(a, &constants)?,
                Command::Calibrate => unreachable!(),
            };
            (command_name(command), constants, outcome)
        }
    };
    let envelope = Envelope {
        tool_version: TOOL_VERSION,
        command: name,
        spec: &outcome.spec,
        seed: outcome.seed,
        constants: &constants,
        constants_hash: constants.hash(),
        result: &outcome.result,
    };
    let text = serde_json::to_string_pretty(&envelope)? + "\n";
    match &cli.out {
        Some(path) => {
            fs::write(path, text)?;
            println!("{}", outcome.summary);
        }
        None => {
            io::stdout().write_all(text.as_bytes())?;
            eprintln!("{}", outcome.summary);
        }
    }
    Ok(outcome.passed)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Build(_) => "build",
        Command::Dump(_) => "dump",
        Command::Analyze(_) => "analyze",
        Command::Locality(_) => "locality",
        Command::Search(_) => "search",
        Command::Sweep(_) => "sweep",
        Command::Calibrate => "calibrate",
        Command::Verify(_) => "verify",
    }
}

fn build(a: &BuildArgs) -> CliResult<Outcome> {
    let g = a.graph.build()?;
    let layout = match a.d {
        Some(d) => match a.graph {
            GraphSpec::Torus(n) => Some(partition_torus(n, d)?),
            GraphSpec::Grid(_) => return Err("--d applies to tori only".into()),
        },
        None => None,
    };
    let summary = format!(
        "{}: {} vertices, {} edge pairs{}",
        a.graph,
        g.n_vertices,
        g.edges.len(),
        layout
            .as_ref()
            .map(|l| format!(", {} blocks", l.blocks.len()))
            .unwrap_or_default()
    );
    Ok(Outcome {
        spec: json!({ "graph": a.graph.to_string(), "d": a.d }),
        seed: None,
        result: json!({ "graph": g, "layout": layout }),
        summary,
        passed: true,
    })
}

fn dump(a: &DumpArgs, out: Option<&Path>) -> CliResult<bool> {
    let g = a.graph.build()?;
    let p = walk_from_graph(&g)?;
    let marked = |a: &DumpArgs| -> CliResult<MarkedSet> {
        let spec = a.marked.as_ref().ok_or("this walk needs --marked")?;
        Ok(spec.resolve(a.graph.side())?)
    };
    let walk = match a.walk {
        WalkChoice::Plain => p,
        WalkChoice::Absorbing => make_absorbing(&p, &marked(a)?)?,
        WalkChoice::Interpolated => interpolate(&p, &make_absorbing(&p, &marked(a)?)?, a.s)?,
    };
    let triplets: Vec<(usize, usize, f64)> = walk.triplets().collect();
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(fs::File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    match a.format {
        DumpFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(["row", "col", "value"])?;
            for t in &triplets {
                w.serialize(t)?;
            }
            w.flush()?;
        }
        DumpFormat::Json => {
            let doc = json!({
                "tool_version": TOOL_VERSION,
                "command": "dump",
                "spec": a,
                "dim": walk.dim(),
                "nnz": walk.nnz(),
                "kind": format!("{:?}", walk.kind()),
                "triplets": triplets,
            });
            serde_json::to_writer_pretty(&mut sink, &doc)?;
            writeln!(sink)?;
        }
    }
    eprintln!(
        "{} {:?} walk: dim {}, {} nonzeros",
        a.graph,
        a.walk,
        walk.dim(),
        walk.nnz()
    );
    Ok(true)
}

fn analyze(a: &AnalyzeArgs) -> CliResult<Outcome> {
    let n = a.graph.side();
    let marked = a.marked.resolve(n)?;
    let p = walk_from_graph(&a.graph.build()?)?;
    let pi = stationary(&p)?;
    let h = hitting_times(&p, &pi, &marked)?;
    let limit = extended_hitting_time_limit(&p, &pi, &marked, &DEFAULT_LIMIT_S)?;
    let mut record = serde_json::to_value(&h)?;
    record["instance"] = json!(format!("{} {}", a.graph, a.marked));
    record["eht_limit"] = json!(limit.limit);
    record["eht_limit_samples"] = serde_json::to_value(&limit)?;
    let summary = format!(
        "{} marked {}: ht {:.6} (linear {:.6}), ht_eff {}, eht {:.6}, eht_limit {:.6}, eps_M {}",
        a.graph, a.marked, h.ht, h.ht_linear, h.ht_eff, h.eht, limit.limit, h.eps_marked
    );
    Ok(Outcome {
        spec: json!({ "graph": a.graph.to_string(), "marked": a.marked.to_string() }),
        seed: None,
        result: record,
        summary,
        passed: true,
    })
}

fn locality_cmd(a: &LocalityArgs) -> CliResult<Outcome> {
    let spec = json!({ "kind": a.kind, "t": a.t, "trials": a.trials });
    let (spec, result, summary, passed) = match a.kind {
        LocalityKind::Line | LocalityKind::Grid => {
            let lattice = match a.kind {
                LocalityKind::Line => Lattice::Line,
                _ => Lattice::Grid,
            };
            let r = locality::localization(lattice, a.t, a.trials, a.seed);
            let summary = format!(
                "{:?} T = {}: localized {:.6} (Wilson low {:.6}, required {:.6}) {}",
                lattice,
                a.t,
                r.localized_fraction,
                r.wilson_low,
                r.required,
                pass_word(r.passed)
            );
            (spec, serde_json::to_value(&r)?, summary, r.passed)
        }
        LocalityKind::Coverage => {
            let marked = a.marked.resolve(a.n)?;
            let r = locality::subgrid_coverage(a.n, &marked, a.t, a.trials, a.seed)?;
            let passed = !r.qualifies() || (r.lemma_holds() && r.chain_holds());
            let mut spec = spec;
            spec["n"] = json!(a.n);
            spec["marked"] = json!(a.marked.to_string());
            let summary = format!(
                "coverage n = {} T = {} d = {}: p {:.6}, p_G {:.6} {}",
                a.n,
                a.t,
                r.d,
                r.p_hat,
                r.p_g,
                pass_word(passed)
            );
            let mut value = serde_json::to_value(&r)?;
            value["qualifies"] = json!(r.qualifies());
            value["lemma_holds"] = json!(r.lemma_holds());
            value["chain_holds"] = json!(r.chain_holds());
            (spec, value, summary, passed)
        }
    };
    Ok(Outcome {
        spec,
        seed: Some(a.seed),
        result,
        summary,
        passed,
    })
}

fn search_report(
    n: usize,
    marked: MarkedSet,
    k: KChoice,
    seed: u64,
    mode: OutputMode,
    constants: &Constants,
) -> CliResult<SearchReport> {
    let config = SearchConfig {
        n,
        marked,
        k,
        seed,
        constants: *constants,
        mode,
    };
    Ok(match k {
        KChoice::Sweep => run_k_sweep(&config)?,
        _ => run_search(&config)?,
    })
}

fn search(a: &SearchArgs, constants: &Constants) -> CliResult<Outcome> {
    let marked = a.marked.resolve(a.n)?;
    let mode = if a.sample {
        OutputMode::Sampling
    } else {
        OutputMode::Probability
    };
    let r = search_report(a.n, marked, a.k, a.seed, mode, constants)?;
    let passed = r.best_k_success >= SUCCESS_BOUND;
    let summary = format!(
        "n = {} marked {}: h~ {}, d {}, T {}, best k {} success {:.6}, steps {}: {}",
        a.n,
        a.marked,
        r.h_tilde,
        r.d,
        r.finding_steps,
        r.best_k,
        r.best_k_success,
        r.steps(),
        r.verdict
    );
    Ok(Outcome {
        spec: json!({
            "n": a.n,
            "marked": a.marked.to_string(),
            "k": a.k,
            "mode": mode,
        }),
        seed: Some(a.seed),
        result: serde_json::to_value(&r)?,
        summary,
        passed,
    })
}

#[derive(Serialize)]
struct SweepRow {
    n: usize,
    marked_count: usize,
    eps_marked: f64,
    ht: f64,
    ht_eff: usize,
    eht: f64,
    h_tilde: usize,
    d: usize,
    finding_steps: usize,
    best_k: u32,
    best_k_success: f64,
    sweep_success: f64,
    steps: u64,
    cost_bound: f64,
    cost_ratio: f64,
}

fn sweep(a: &SweepArgs, constants: &Constants) -> CliResult<Outcome> {
    if a.sizes.is_empty() {
        return Err("--sizes must list at least one side".into());
    }
    let mut rows = Vec::with_capacity(a.sizes.len());
    for &n in &a.sizes {
        let marked = a.marked.resolve(n)?;
        let p = walk_from_graph(&GraphSpec::Torus(n).build()?)?;
        let pi = stationary(&p)?;
        let h = hitting_times(&p, &pi, &marked)?;
        let h_eff = effective_hitting_time(&p, &pi, &marked)? as f64;
        let r = search_report(
            n,
            marked,
            KChoice::Sweep,
            a.seed,
            OutputMode::Probability,
            constants,
        )?;
        let check = verify_cost_bound(&r, constants.c3, h_eff);
        rows.push(SweepRow {
            n,
            marked_count: r.marked_count,
            eps_marked: h.eps_marked,
            ht: h.ht,
            ht_eff: h.ht_eff,
            eht: h.eht,
            h_tilde: r.h_tilde,
            d: r.d,
            finding_steps: r.finding_steps,
            best_k: r.best_k,
            best_k_success: r.best_k_success,
            sweep_success: r.sweep_success.unwrap_or(r.best_k_success),
            steps: r.steps(),
            cost_bound: check.bound,
            cost_ratio: check.ratio,
        });
    }
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let passed = rows
        .iter()
        .all(|r| r.best_k_success >= SUCCESS_BOUND && r.cost_ratio <= 1.0);
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "n = {:3}: eht {:.3}, steps {}, ratio {:.4}, sweep success {:.4}",
                r.n, r.eht, r.steps, r.cost_ratio, r.sweep_success
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        spec: json!({
            "sizes": a.sizes,
            "marked": a.marked.to_string(),
            "csv": a.csv,
        }),
        seed: Some(a.seed),
        result: serde_json::to_value(&rows)?,
        summary: format!("{summary}\n{}", pass_word(passed)),
        passed,
    })
}

fn verify(a: &VerifyArgs, constants: &Constants) -> CliResult<Outcome> {
    let suite = Suite::parse(&a.suite)?;
    let opts = VerifyOptions {
        seed: a.seed,
        trials: a.trials,
        n: a.n,
    };
    let report = run_suite(suite, &opts, constants)?;
    let summary = report
        .criteria
        .iter()
        .map(|c| c.summary_line())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        spec: json!({ "suite": suite, "options": opts }),
        seed: Some(a.seed),
        result: serde_json::to_value(&report)?,
        summary,
        passed: report.passed,
    })
}

fn pass_word(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}
