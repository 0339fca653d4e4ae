//! Torus and grid graphs, and the decomposition of a torus into disjoint
//! sub-grids.
//!
//! Vertices of an `rows x cols` lattice are indexed row-major, `v = r * cols + c`.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Torus,
    Grid,
    Generic,
}

/// A directed edge with multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub multiplicity: u32,
}

/// Directed multigraph with per-vertex lattice coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n_vertices: usize,
    /// Sorted by `(source, target)`; each pair appears once.
    pub edges: Vec<Edge>,
    pub coords: Vec<(usize, usize)>,
    pub kind: GraphKind,
    pub rows: usize,
    pub cols: usize,
}

impl Graph {
    /// Builds a graph from a list of directed edge instances, merging repeats
    /// into multiplicities.
    pub fn from_edge_list(
        n_vertices: usize,
        edge_list: impl IntoIterator<Item = (usize, usize)>,
        coords: Vec<(usize, usize)>,
        kind: GraphKind,
        rows: usize,
        cols: usize,
    ) -> Result<Graph> {
        if n_vertices == 0 {
            return Err(invalid("graph needs at least one vertex"));
        }
        if coords.len() != n_vertices {
            return Err(invalid("one coordinate pair per vertex required"));
        }
        let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (s, t) in edge_list {
            if s >= n_vertices || t >= n_vertices {
                return Err(invalid(format!("edge ({s},{t}) out of range")));
            }
            *counts.entry((s, t)).or_insert(0) += 1;
        }
        let edges = counts
            .into_iter()
            .map(|((source, target), multiplicity)| Edge {
                source,
                target,
                multiplicity,
            })
            .collect();
        Ok(Graph {
            n_vertices,
            edges,
            coords,
            kind,
            rows,
            cols,
        })
    }

    pub fn out_degree(&self, v: usize) -> u32 {
        self.out_edges(v).map(|e| e.multiplicity).sum()
    }

    pub fn in_degree(&self, v: usize) -> u32 {
        self.edges
            .iter()
            .filter(|e| e.target == v)
            .map(|e| e.multiplicity)
            .sum()
    }

    pub fn out_edges(&self, v: usize) -> impl Iterator<Item = &Edge> {
        let start = self.edges.partition_point(|e| e.source < v);
        self.edges[start..]
            .iter()
            .take_while(move |e| e.source == v)
    }

    pub fn multiplicity(&self, source: usize, target: usize) -> u32 {
        self.out_edges(source)
            .find(|e| e.target == target)
            .map_or(0, |e| e.multiplicity)
    }

    pub fn edge_instance_count(&self) -> usize {
        self.edges.iter().map(|e| e.multiplicity as usize).sum()
    }

    pub fn self_loop_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| e.source == e.target)
            .map(|e| e.multiplicity as usize)
            .sum()
    }

    pub fn vertex(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }
}

fn lattice_coords(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect()
}

/// The `n x n` torus: `(r, c)` points to `(r +- 1, c)` and `(r, c +- 1)`
/// modulo `n`. For `n = 2` the two neighbors along an axis coincide and the
/// edge carries multiplicity 2.
pub fn build_torus(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(invalid(format!("torus side must be >= 2, got {n}")));
    }
    let mut edges = Vec::with_capacity(4 * n * n);
    for r in 0..n {
        for c in 0..n {
            let v = r * n + c;
            edges.push((v, ((r + n - 1) % n) * n + c));
            edges.push((v, ((r + 1) % n) * n + c));
            edges.push((v, r * n + (c + n - 1) % n));
            edges.push((v, r * n + (c + 1) % n));
        }
    }
    Graph::from_edge_list(n * n, edges, lattice_coords(n, n), GraphKind::Torus, n, n)
}

/// The `n x n` grid with boundary clamping; clamped moves become self-loops.
pub fn build_grid(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(invalid(format!("grid side must be >= 2, got {n}")));
    }
    build_grid_rect(n, n)
}

/// Rectangular grid with boundary self-loops. A `1 x w` strip is allowed;
/// every vertex still has out-degree 4.
pub fn build_grid_rect(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(invalid("grid sides must be positive"));
    }
    let mut edges = Vec::with_capacity(4 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            edges.push((v, r.saturating_sub(1) * cols + c));
            edges.push((v, (r + 1).min(rows - 1) * cols + c));
            edges.push((v, r * cols + c.saturating_sub(1)));
            edges.push((v, r * cols + (c + 1).min(cols - 1)));
        }
    }
    Graph::from_edge_list(
        rows * cols,
        edges,
        lattice_coords(rows, cols),
        GraphKind::Grid,
        rows,
        cols,
    )
}

/// One rectangular block of a torus partition (half-open ranges).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Block {
    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    pub fn len(&self) -> usize {
        self.height() * self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.rows.contains(&r) && self.cols.contains(&c)
    }

    /// Torus vertex ids of the block, in the block's own row-major order.
    pub fn vertices(&self, n: usize) -> Vec<usize> {
        self.rows
            .clone()
            .flat_map(|r| self.cols.clone().map(move |c| r * n + c))
            .collect()
    }
}

/// Decomposition of the `n x n` torus into `q x q` rectangular blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionLayout {
    pub n: usize,
    pub d: usize,
    /// Blocks per axis.
    pub q: usize,
    pub blocks: Vec<Block>,
    pub block_of: Vec<usize>,
}

impl PartitionLayout {
    /// Smallest block side.
    pub fn min_side(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.height().min(b.width()))
            .min()
            .unwrap_or(0)
    }

    pub fn max_side(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.height().max(b.width()))
            .max()
            .unwrap_or(0)
    }
}

/// Cut points along one axis: `q` intervals whose lengths are `floor(n/q)`
/// or `ceil(n/q)`, the first `n mod q` of them being the longer ones.
fn axis_cuts(n: usize, q: usize) -> Vec<Range<usize>> {
    let base = n / q;
    let extra = n % q;
    let mut start = 0;
    (0..q)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

/// Partitions the torus into `q^2` blocks with `q = max(1, floor(n/d))`.
pub fn partition_torus(n: usize, d: usize) -> Result<PartitionLayout> {
    if n < 2 {
        return Err(invalid(format!("torus side must be >= 2, got {n}")));
    }
    if d < 1 || d > n {
        return Err(invalid(format!("cut parameter d={d} outside [1, {n}]")));
    }
    let q = (n / d).max(1);
    let cuts = axis_cuts(n, q);
    let mut blocks = Vec::with_capacity(q * q);
    for rr in &cuts {
        for cc in &cuts {
            blocks.push(Block {
                rows: rr.clone(),
                cols: cc.clone(),
            });
        }
    }
    let mut block_of = vec![0; n * n];
    for (b, block) in blocks.iter().enumerate() {
        for v in block.vertices(n) {
            block_of[v] = b;
        }
    }
    Ok(PartitionLayout {
        n,
        d,
        q,
        blocks,
        block_of,
    })
}

/// The grid graph induced on one block: edges leaving the block become
/// self-loops. Vertex `i` of the result is `layout.blocks[block].vertices(n)[i]`.
pub fn subgrid_graph(layout: &PartitionLayout, block: usize) -> Result<Graph> {
    let b = layout
        .blocks
        .get(block)
        .ok_or_else(|| invalid(format!("block index {block} out of range")))?;
    build_grid_rect(b.height(), b.width())
}

/// Number of directed torus edge instances whose endpoints lie in different
/// blocks. Moves are taken in unwrapped coordinates, so with a single block
/// the wraparound edges count as cut.
pub fn cut_edge_count(layout: &PartitionLayout) -> usize {
    let mut count = 0;
    for block in &layout.blocks {
        for r in block.rows.clone() {
            for c in block.cols.clone() {
                let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
                for (dr, dc) in moves {
                    let rr = r as isize + dr;
                    let cc = c as isize + dc;
                    let inside = rr >= block.rows.start as isize
                        && rr < block.rows.end as isize
                        && cc >= block.cols.start as isize
                        && cc < block.cols.end as isize;
                    if !inside {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_three_is_four_regular() {
        let g = build_torus(3).unwrap();
        assert_eq!(g.n_vertices, 9);
        assert_eq!(g.edge_instance_count(), 36);
        for v in 0..9 {
            assert_eq!(g.out_degree(v), 4);
            assert_eq!(g.in_degree(v), 4);
        }
    }

    #[test]
    fn torus_two_has_parallel_edges() {
        let g = build_torus(2).unwrap();
        assert_eq!(g.multiplicity(g.vertex(0, 0), g.vertex(1, 0)), 2);
        assert_eq!(g.multiplicity(g.vertex(0, 0), g.vertex(0, 1)), 2);
        assert_eq!(g.out_edges(0).count(), 2);
    }

    #[test]
    fn rejects_small_sides() {
        assert!(build_torus(1).is_err());
        assert!(build_grid(1).is_err());
        assert!(build_torus(0).is_err());
    }

    #[test]
    fn grid_corner_and_interior() {
        let g = build_grid(3).unwrap();
        let corner = g.vertex(0, 0);
        assert_eq!(g.multiplicity(corner, corner), 2);
        assert_eq!(g.multiplicity(corner, g.vertex(1, 0)), 1);
        assert_eq!(g.multiplicity(corner, g.vertex(0, 1)), 1);
        let mid = g.vertex(1, 1);
        assert_eq!(g.multiplicity(mid, mid), 0);
        for (r, c) in [(0, 1), (2, 1), (1, 0), (1, 2)] {
            assert_eq!(g.multiplicity(mid, g.vertex(r, c)), 1);
        }
        for v in 0..9 {
            assert_eq!(g.out_degree(v), 4);
            assert_eq!(g.in_degree(v), 4);
        }
    }

    #[test]
    fn torus_offsets_are_vertex_transitive() {
        let n = 5;
        let g = build_torus(n).unwrap();
        let offsets = |v: usize| {
            let (r, c) = g.coords[v];
            let mut o: Vec<(usize, usize)> = g
                .out_edges(v)
                .flat_map(|e| {
                    let (tr, tc) = g.coords[e.target];
                    std::iter::repeat_n(
                        ((tr + n - r) % n, (tc + n - c) % n),
                        e.multiplicity as usize,
                    )
                })
                .collect();
            o.sort();
            o
        };
        let reference = offsets(0);
        for v in 1..g.n_vertices {
            assert_eq!(offsets(v), reference);
        }
    }

    #[test]
    fn partition_examples() {
        let l = partition_torus(16, 4).unwrap();
        assert_eq!(l.blocks.len(), 16);
        assert!(l.blocks.iter().all(|b| b.height() == 4 && b.width() == 4));

        let l = partition_torus(10, 4).unwrap();
        assert_eq!(l.q, 2);
        assert_eq!(l.blocks.len(), 4);
        assert!(l.blocks.iter().all(|b| b.height() == 5 && b.width() == 5));

        let l = partition_torus(8, 8).unwrap();
        assert_eq!(l.blocks.len(), 1);
        assert_eq!(l.blocks[0].len(), 64);
    }

    #[test]
    fn partition_rejects_bad_d() {
        assert!(partition_torus(8, 0).is_err());
        assert!(partition_torus(8, 9).is_err());
    }

    #[test]
    fn remainder_goes_to_leading_blocks() {
        let l = partition_torus(11, 3).unwrap();
        assert_eq!(l.q, 3);
        let heights: Vec<usize> = l.blocks.iter().step_by(3).map(Block::height).collect();
        assert_eq!(heights, vec![4, 4, 3]);
    }

    #[test]
    fn subgrid_matches_grid() {
        let l = partition_torus(16, 4).unwrap();
        for b in 0..l.blocks.len() {
            assert_eq!(subgrid_graph(&l, b).unwrap(), build_grid(4).unwrap());
        }
        let l = partition_torus(10, 4).unwrap();
        let g = subgrid_graph(&l, 3).unwrap();
        assert_eq!(g, build_grid(5).unwrap());
        assert!(subgrid_graph(&l, 4).is_err());
    }

    #[test]
    fn self_loops_replace_cut_edges() {
        for (n, d) in [(16, 4), (10, 4), (9, 2), (7, 7), (12, 5)] {
            let l = partition_torus(n, d).unwrap();
            let loops: usize = (0..l.blocks.len())
                .map(|b| subgrid_graph(&l, b).unwrap().self_loop_count())
                .sum();
            assert_eq!(loops, cut_edge_count(&l), "n={n} d={d}");
        }
    }
}
