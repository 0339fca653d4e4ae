//! Step-count constants `c` (detection), `c2` (finding) and `c3` (cost bound),
//! fixed once by a deterministic sweep and stored as TOML.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{build_grid, build_torus};
use crate::markov::{stationary, walk_from_graph, MarkedSet};
use crate::quantum::{detection_overlaps, find_success_curve};
use crate::search::{cost_bound, finding_steps, run_search, KChoice, OutputMode, SearchConfig};
use crate::specs::{centre, two_clusters, MarkedSpec};
use crate::spectral::effective_hitting_time;

pub const DEFAULT_PATH: &str = "calibration/constants.toml";

/// Constants are searched on multiples of this step.
pub const GRID_STEP: f64 = 0.05;
pub const MAX_CONSTANT: f64 = 10.0;
/// Detection must push the overlap with the initial state down to this.
pub const DETECTION_OVERLAP: f64 = 0.9;
/// Finding must reach this success probability.
pub const FIND_SUCCESS: f64 = 0.2;
/// `c3` is the largest observed ratio times this margin, rounded up to 0.5.
pub const COST_MARGIN: f64 = 1.25;

pub const SWEEP_SIDES: std::ops::RangeInclusive<usize> = 4..=16;
pub const COST_SIDES: [usize; 2] = [8, 12];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Detection: `T_q = ceil(c sqrt(HT_eff))`.
    pub c: f64,
    /// Finding: `T = ceil(c2 D sqrt(max(1, ln D)))`.
    pub c2: f64,
    /// Cost bound: `c3 min{sqrt(H ln H), sqrt(N ln N)}`.
    pub c3: f64,
}

impl Default for Constants {
    /// The values written by `calibrate()` for this code version.
    fn default() -> Self {
        Constants {
            c: 0.3,
            c2: 1.85,
            c3: 45.0,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("c2", self.c2), ("c3", self.c3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parse(format!(
                    "constant {name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical `name=value` rendering, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = format!("c={:?};c2={:?};c3={:?}", self.c, self.c2, self.c3);
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Constants> {
        let text = fs::read_to_string(path)?;
        let file: ConstantsFile =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let constants = Constants {
            c: file.c,
            c2: file.c2,
            c3: file.c3,
        };
        constants.validate()?;
        if let Some(p) = &file.provenance {
            if p.hash != constants.hash() {
                return Err(Error::Parse(format!(
                    "{}: constants do not match recorded hash",
                    path.display()
                )));
            }
        }
        Ok(constants)
    }

    /// Loads `path` if it exists, otherwise the built-in defaults.
    pub fn load_or_default(path: &Path) -> Result<Constants> {
        if path.exists() {
            Constants::load(path)
        } else {
            Ok(Constants::default())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub detection_sweep: String,
    pub finding_sweep: String,
    pub cost_sweep: String,
    pub worst_detection_overlap: f64,
    pub worst_find_success: f64,
    pub worst_cost_ratio: f64,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConstantsFile {
    c: f64,
    c2: f64,
    c3: f64,
    provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub constants: Constants,
    pub provenance: Provenance,
}

impl Calibration {
    pub fn to_toml(&self) -> Result<String> {
        let file = ConstantsFile {
            c: self.constants.c,
            c2: self.constants.c2,
            c3: self.constants.c3,
            provenance: Some(self.provenance.clone()),
        };
        let body = toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(format!(
            "# Generated by `twalk calibrate`; do not edit by hand.\n{body}"
        ))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

fn grid_values() -> impl Iterator<Item = f64> {
    let steps = (MAX_CONSTANT / GRID_STEP).round() as usize;
    // Rounded to the grid so the written values are short decimals.
    (1..=steps).map(|i| (i as f64 * GRID_STEP * 100.0).round() / 100.0)
}

fn calibration_error(instance: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Calibration {
        instance: instance.into(),
        reason: reason.into(),
    }
}

/// Smallest `c` with overlap at most 0.9 after `ceil(c sqrt(HT_eff))` steps
/// on every single-marked torus of the sweep.
fn calibrate_detection() -> Result<(f64, f64)> {
    let cases: Vec<(usize, usize, Vec<f64>)> = SWEEP_SIDES
        .into_par_iter()
        .map(|n| {
            let p = walk_from_graph(&build_torus(n)?)?;
            let pi = stationary(&p)?;
            let m = MarkedSet::new([0], n * n)?;
            let h = effective_hitting_time(&p, &pi, &m)?;
            let t_max = (MAX_CONSTANT * (h as f64).sqrt()).ceil() as usize;
            Ok((n, h, detection_overlaps(&p, &pi, Some(&m), t_max)?))
        })
        .collect::<Result<_>>()?;
    for c in grid_values() {
        let worst = cases
            .iter()
            .map(|(_, h, ov)| ov[(c * (*h as f64).sqrt()).ceil() as usize])
            .fold(0.0, f64::max);
        if worst <= DETECTION_OVERLAP {
            return Ok((c, worst));
        }
    }
    Err(calibration_error(
        "detection sweep",
        "no constant reaches overlap 0.9",
    ))
}

struct FindCase {
    label: String,
    side: usize,
    curve: Vec<f64>,
}

fn find_cases() -> Result<Vec<FindCase>> {
    let mut jobs = Vec::new();
    for n in SWEEP_SIDES {
        jobs.push((format!("torus:{n}"), n, false, 0));
        let half = (n - 1) / 2;
        for r in 0..=half {
            for c in r..=half {
                jobs.push((format!("grid:{n} cell ({r},{c})"), n, true, r * n + c));
            }
        }
    }
    let t_max = |side: usize| 2 * finding_steps(MAX_CONSTANT, side);
    jobs.into_par_iter()
        .flat_map_iter(|(label, n, grid, v)| {
            [2.0 / 3.0, 1.0, 4.0 / 3.0].map(|ratio| (label.clone(), n, grid, v, ratio))
        })
        .map(|(label, n, grid, v, ratio)| {
            let g = if grid {
                build_grid(n)?
            } else {
                build_torus(n)?
            };
            let p = walk_from_graph(&g)?;
            let pi = stationary(&p)?;
            let m = MarkedSet::new([v], n * n)?;
            let eps = ratio * pi.mass(m.members());
            Ok(FindCase {
                label: format!("{label} ratio {ratio:.3}"),
                side: n,
                curve: find_success_curve(&p, &pi, &m, eps, t_max(n))?,
            })
        })
        .collect()
}

/// Smallest `c2` such that every single-marked torus and grid of the sweep,
/// with estimate ratio in {2/3, 1, 4/3}, succeeds with probability 1/5 for
/// every step count between `T(c2)` and `2 T(c2)`.
fn calibrate_finding() -> Result<(f64, f64)> {
    let cases = find_cases()?;
    for c2 in grid_values() {
        let worst = cases
            .iter()
            .map(|case| {
                let t = finding_steps(c2, case.side);
                case.curve[t - 1..2 * t]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        if worst >= FIND_SUCCESS {
            return Ok((c2, worst));
        }
    }
    let label = cases.first().map(|c| c.label.clone()).unwrap_or_default();
    Err(calibration_error(label, "no constant reaches success 1/5"))
}

/// Marked families used for the cost-bound constant.
pub fn cost_families(n: usize) -> Vec<(&'static str, MarkedSpec)> {
    vec![
        ("singleton", centre(n)),
        ("row", MarkedSpec::Rows(vec![0])),
        ("two clusters", two_clusters(n)),
        ("half", MarkedSpec::Half),
        ("gap", MarkedSpec::Gap),
    ]
}

/// Ledger steps over the bound with `c3 = 1`, on the cost families.
fn calibrate_cost(c: f64, c2: f64) -> Result<(f64, f64)> {
    let constants = Constants { c, c2, c3: 1.0 };
    let mut worst: f64 = 0.0;
    for n in COST_SIDES {
        for (name, spec) in cost_families(n) {
            let marked = spec.resolve(n)?;
            let config = SearchConfig {
                n,
                marked: marked.clone(),
                k: KChoice::Fixed(1),
                seed: 0,
                constants,
                mode: OutputMode::Probability,
            };
            let report = run_search(&config)
                .map_err(|e| calibration_error(format!("{name} n={n}"), e.to_string()))?;
            let p = walk_from_graph(&build_torus(n)?)?;
            let pi = stationary(&p)?;
            let h = effective_hitting_time(&p, &pi, &marked)? as f64;
            let (bound, _) = cost_bound(1.0, h, n * n);
            worst = worst.max(report.steps() as f64 / bound);
        }
    }
    let c3 = (worst * COST_MARGIN * 2.0).ceil() / 2.0;
    Ok((c3, worst))
}

/// Runs the full sweep. Deterministic: the same code yields the same file.
pub fn calibrate() -> Result<Calibration> {
    let (c, worst_overlap) = calibrate_detection()?;
    let (c2, worst_success) = calibrate_finding()?;
    let (c3, worst_ratio) = calibrate_cost(c, c2)?;
    let constants = Constants { c, c2, c3 };
    constants.validate()?;
    Ok(Calibration {
        constants,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            detection_sweep: "torus n=4..16, M={0}; smallest c with overlap <= 0.9 at ceil(c sqrt(HT_eff))".into(),
            finding_sweep: "torus n=4..16 M={0} and grid n=4..16 every singleton up to symmetry, estimate/eps in {2/3,1,4/3}; smallest c2 with success >= 1/5 for all T in [T(c2), 2T(c2)]".into(),
            cost_sweep: "torus n in {8,12}, families singleton/row/two clusters/half/gap; c3 = 1.25 x worst steps/bound, rounded up to 0.5".into(),
            worst_detection_overlap: worst_overlap,
            worst_find_success: worst_success,
            worst_cost_ratio: worst_ratio,
            hash: constants.hash(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Constants::default();
        assert_eq!(a.hash(), a.hash());
        assert_eq!(a.hash().len(), 64);
        let b = Constants {
            c3: a.c3 + 0.5,
            ..a
        };
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation_rejects_nonpositive() {
        assert!(Constants {
            c: 0.0,
            ..Constants::default()
        }
        .validate()
        .is_err());
        assert!(Constants {
            c2: f64::NAN,
            ..Constants::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn grid_is_short_decimals() {
        let v: Vec<f64> = grid_values().take(3).collect();
        assert_eq!(v, vec![0.05, 0.1, 0.15]);
    }
}
