//! Textual instance specs: `torus:5`, `grid:4` for graphs and
//! `rows:a,b`, `cols:a,b`, `cells:(r,c);(r,c)`, `half`, `gap`,
//! `random:m:seed` for marked sets.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_grid, build_torus, Graph};
use crate::markov::MarkedSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum GraphSpec {
    Torus(usize),
    Grid(usize),
}

impl GraphSpec {
    pub fn side(&self) -> usize {
        match *self {
            GraphSpec::Torus(n) | GraphSpec::Grid(n) => n,
        }
    }

    pub fn build(&self) -> Result<Graph> {
        match *self {
            GraphSpec::Torus(n) => build_torus(n),
            GraphSpec::Grid(n) => build_grid(n),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<GraphSpec> {
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("graph spec `{s}`: expected kind:n")))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("graph spec `{s}`: bad side `{n}`")))?;
        match kind.trim() {
            "torus" => Ok(GraphSpec::Torus(n)),
            "grid" => Ok(GraphSpec::Grid(n)),
            other => Err(Error::Parse(format!(
                "graph spec `{s}`: unknown kind `{other}`"
            ))),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Torus(n) => write!(f, "torus:{n}"),
            GraphSpec::Grid(n) => write!(f, "grid:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkedSpec {
    Rows(Vec<usize>),
    Cols(Vec<usize>),
    Cells(Vec<(usize, usize)>),
    /// Every column `c < n/2`.
    Half,
    /// Columns `c < n/2` plus the cells with `r + c` even on the other half.
    Gap,
    Random {
        m: usize,
        seed: u64,
    },
}

fn parse_list(body: &str, whole: &str) -> Result<Vec<usize>> {
    body.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("marked spec `{whole}`: bad index `{x}`")))
        })
        .collect()
}

impl FromStr for MarkedSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<MarkedSpec> {
        let s = s.trim();
        let (head, body) = s.split_once(':').unwrap_or((s, ""));
        let spec = match head {
            "half" if body.is_empty() => MarkedSpec::Half,
            "gap" if body.is_empty() => MarkedSpec::Gap,
            "rows" => MarkedSpec::Rows(parse_list(body, s)?),
            "cols" => MarkedSpec::Cols(parse_list(body, s)?),
            "cells" => {
                let cells = body
                    .split(';')
                    .map(|cell| {
                        let inner = cell
                            .trim()
                            .strip_prefix('(')
                            .and_then(|c| c.strip_suffix(')'))
                            .ok_or_else(|| {
                                Error::Parse(format!("marked spec `{s}`: bad cell `{cell}`"))
                            })?;
                        match parse_list(inner, s)?.as_slice() {
                            [r, c] => Ok((*r, *c)),
                            _ => Err(Error::Parse(format!(
                                "marked spec `{s}`: cell `{cell}` needs two coordinates"
                            ))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                MarkedSpec::Cells(cells)
            }
            "random" => {
                let (m, seed) = body.split_once(':').ok_or_else(|| {
                    Error::Parse(format!("marked spec `{s}`: expected random:m:seed"))
                })?;
                let m = m
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("marked spec `{s}`: bad count `{m}`")))?;
                let seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("marked spec `{s}`: bad seed `{seed}`")))?;
                MarkedSpec::Random { m, seed }
            }
            _ => return Err(Error::Parse(format!("unknown marked spec `{s}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for MarkedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            MarkedSpec::Rows(v) => write!(f, "rows:{}", join(v)),
            MarkedSpec::Cols(v) => write!(f, "cols:{}", join(v)),
            MarkedSpec::Cells(cells) => {
                let parts: Vec<String> = cells.iter().map(|(r, c)| format!("({r},{c})")).collect();
                write!(f, "cells:{}", parts.join(";"))
            }
            MarkedSpec::Half => write!(f, "half"),
            MarkedSpec::Gap => write!(f, "gap"),
            MarkedSpec::Random { m, seed } => write!(f, "random:{m}:{seed}"),
        }
    }
}

impl MarkedSpec {
    /// Vertex ids (`r * n + c`) on an `n x n` lattice.
    pub fn vertices(&self, n: usize) -> Result<Vec<usize>> {
        let check = |x: usize, what: &str| {
            if x < n {
                Ok(x)
            } else {
                Err(Error::Parse(format!("{what} {x} outside 0..{n}")))
            }
        };
        let out = match self {
            MarkedSpec::Rows(rows) => {
                let mut v = Vec::new();
                for &r in rows {
                    check(r, "row")?;
                    v.extend((0..n).map(|c| r * n + c));
                }
                v
            }
            MarkedSpec::Cols(cols) => {
                let mut v = Vec::new();
                for &c in cols {
                    check(c, "column")?;
                    v.extend((0..n).map(|r| r * n + c));
                }
                v
            }
            MarkedSpec::Cells(cells) => cells
                .iter()
                .map(|&(r, c)| Ok(check(r, "row")? * n + check(c, "column")?))
                .collect::<Result<Vec<_>>>()?,
            MarkedSpec::Half => (0..n * n).filter(|v| v % n < n / 2).collect(),
            MarkedSpec::Gap => (0..n * n)
                .filter(|v| {
                    let (r, c) = (v / n, v % n);
                    c < n / 2 || (r + c) % 2 == 0
                })
                .collect(),
            MarkedSpec::Random { m, seed } => {
                if *m > n * n {
                    return Err(Error::Parse(format!(
                        "cannot mark {m} of {} vertices",
                        n * n
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut v = sample(&mut rng, n * n, *m).into_vec();
                v.sort_unstable();
                v
            }
        };
        Ok(out)
    }

    pub fn resolve(&self, n: usize) -> Result<MarkedSet> {
        MarkedSet::new(self.vertices(n)?, n * n)
    }
}

/// Two 2x2 clusters, near `(1, 1)` and near the centre.
pub fn two_clusters(n: usize) -> MarkedSpec {
    let mut cells = Vec::new();
    for (r0, c0) in [(1, 1), (n / 2 + 1, n / 2 + 1)] {
        for dr in 0..2 {
            for dc in 0..2 {
                cells.push(((r0 + dr) % n, (c0 + dc) % n));
            }
        }
    }
    MarkedSpec::Cells(cells)
}

/// Single vertex at the centre.
pub fn centre(n: usize) -> MarkedSpec {
    MarkedSpec::Cells(vec![(n / 2, n / 2)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_specs_round_trip() {
        for s in ["torus:5", "grid:4"] {
            assert_eq!(s.parse::<GraphSpec>().unwrap().to_string(), s);
        }
        assert!("ring:4".parse::<GraphSpec>().is_err());
        assert!("torus:x".parse::<GraphSpec>().is_err());
        assert!("torus".parse::<GraphSpec>().is_err());
    }

    #[test]
    fn marked_specs_round_trip() {
        for s in [
            "rows:0,3",
            "cols:2",
            "cells:(0,0);(1,2)",
            "half",
            "gap",
            "random:5:9",
        ] {
            assert_eq!(s.parse::<MarkedSpec>().unwrap().to_string(), s);
        }
        for bad in [
            "rows:",
            "cells:0,0",
            "cells:(1)",
            "random:3",
            "halfx",
            "row:1",
        ] {
            assert!(bad.parse::<MarkedSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn resolution() {
        assert_eq!(
            MarkedSpec::Rows(vec![1]).vertices(3).unwrap(),
            vec![3, 4, 5]
        );
        assert_eq!(
            MarkedSpec::Cols(vec![1]).vertices(3).unwrap(),
            vec![1, 4, 7]
        );
        assert_eq!(MarkedSpec::Half.vertices(4).unwrap().len(), 8);
        assert_eq!(MarkedSpec::Gap.vertices(4).unwrap().len(), 12);
        let r = MarkedSpec::Random { m: 5, seed: 2 };
        assert_eq!(r.vertices(6).unwrap(), r.vertices(6).unwrap());
        assert_eq!(r.vertices(6).unwrap().len(), 5);
        assert!(MarkedSpec::Cells(vec![(4, 0)]).vertices(4).is_err());
        assert!(MarkedSpec::Rows(vec![0, 1]).resolve(2).is_err());
        assert_eq!(two_clusters(16).resolve(16).unwrap().len(), 8);
    }
}
