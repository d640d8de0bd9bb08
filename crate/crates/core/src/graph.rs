//! Symmetrized K-nearest and N-farthest neighbor sets with Gaussian kernel
//! weights.
//!
//! Distances are computed one row block at a time, so memory stays at
//! `block × M` floats rather than `M × M`. Selection per row is exact. Each
//! row is ordered by (distance, column index); nearest sets take the head of
//! that order and farthest sets the tail, so among equal distances the lower
//! index counts as nearer. The two picks never overlap while `K + N < M`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::error::{bail_arg, Error, Result};
use crate::matrix::{dot, sq_dist, Matrix};

/// Rows per distance block in [`build_graph`].
pub const ROW_BLOCK: usize = 64;

/// Squared row norms, reused by every distance block.
pub fn sq_norms(x: &Matrix) -> Vec<f64> {
    x.row_iter().map(|r| dot(r, r)).collect()
}

/// Block of squared Euclidean distances between rows `rows` and rows `cols`
/// of `x`, via `‖a‖² + ‖b‖² − 2a·b` clamped at zero. Self-distances are
/// exactly zero.
pub fn pairwise_sq_dists_block(x: &Matrix, rows: Range<usize>, cols: Range<usize>) -> Matrix {
    let norms = sq_norms(x);
    sq_dists_block_with_norms(x, &norms, rows, cols)
}

pub fn sq_dists_block_with_norms(x: &Matrix, norms: &[f64], rows: Range<usize>, cols: Range<usize>) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), cols.len());
    for (bi, i) in rows.clone().enumerate() {
        let xi = x.row(i);
        let o = out.row_mut(bi);
        for (bj, j) in cols.clone().enumerate() {
            o[bj] = if i == j {
                0.0
            } else {
                (norms[i] + norms[j] - 2.0 * dot(xi, x.row(j))).max(0.0)
            };
        }
    }
    out
}

/// Unsymmetrized selections for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSelection {
    /// `k` closest rows, closest first.
    pub nearest: Vec<usize>,
    /// `n_far` most distant rows, most distant first.
    pub farthest: Vec<usize>,
}

fn near_order(d: &[f64], a: usize, b: usize) -> Ordering {
    d[a].total_cmp(&d[b]).then(a.cmp(&b))
}

fn far_order(d: &[f64], a: usize, b: usize) -> Ordering {
    near_order(d, b, a)
}

fn select_from_row(i: usize, dists: &[f64], k: usize, n_far: usize, scratch: &mut Vec<usize>) -> RowSelection {
    let pick = |scratch: &mut Vec<usize>, n: usize, ord: fn(&[f64], usize, usize) -> Ordering| {
        scratch.clear();
        scratch.extend((0..dists.len()).filter(|&j| j != i));
        let n = n.min(scratch.len());
        if n < scratch.len() {
            scratch.select_nth_unstable_by(n, |&a, &b| ord(dists, a, b));
        }
        let mut sel = scratch[..n].to_vec();
        sel.sort_unstable_by(|&a, &b| ord(dists, a, b));
        sel
    };
    RowSelection {
        nearest: pick(scratch, k, near_order),
        farthest: pick(scratch, n_far, far_order),
    }
}

/// Neighbor selections for rows `rows`. Independent per row, so callers may
/// run disjoint ranges on different threads and concatenate the results.
pub fn select_rows(x: &Matrix, norms: &[f64], rows: Range<usize>, k: usize, n_far: usize) -> Vec<RowSelection> {
    let m = x.rows();
    let mut out = Vec::with_capacity(rows.len());
    let mut scratch = Vec::with_capacity(m);
    let mut start = rows.start;
    while start < rows.end {
        let end = (start + ROW_BLOCK).min(rows.end);
        let block = sq_dists_block_with_norms(x, norms, start..end, 0..m);
        for (bi, i) in (start..end).enumerate() {
            out.push(select_from_row(i, block.row(bi), k, n_far, &mut scratch));
        }
        start = end;
    }
    out
}

/// Which weight family an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// Neighbor edge, weight `H`.
    Near,
    /// Distant edge, weight `W`.
    Far,
}

/// Symmetric sparse neighbor/distant graph over `M` rows.
///
/// Adjacency lists are sorted by column index. `H_ij = exp(-‖x_i − x_j‖²/t)`
/// on neighbor pairs and `W_ij` is the same kernel on distant pairs; pairs not
/// stored have weight 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    near: Vec<Vec<(usize, f64)>>,
    far: Vec<Vec<(usize, f64)>>,
    t: f64,
    k: usize,
    n_far: usize,
}

fn check_params(m: usize, k: usize, n_far: usize, t: f64) -> Result<()> {
    if k < 1 || k >= m {
        bail_arg!("k={} must satisfy 1 <= k < M={}", k, m);
    }
    if n_far < 1 || n_far >= m {
        bail_arg!("n_far={} must satisfy 1 <= n_far < M={}", n_far, m);
    }
    if !(t > 0.0 && t.is_finite()) {
        bail_arg!("kernel width t={} must be positive", t);
    }
    Ok(())
}

/// Builds the neighbor graph of `x` on a single thread.
pub fn build_graph(x: &Matrix, k: usize, n_far: usize, t: f64) -> Result<NeighborGraph> {
    check_params(x.rows(), k, n_far, t)?;
    let norms = sq_norms(x);
    let sel = select_rows(x, &norms, 0..x.rows(), k, n_far);
    NeighborGraph::assemble(x, &sel, k, n_far, t)
}

impl NeighborGraph {
    /// Merges per-row selections (one per row of `x`, in row order) into the
    /// symmetrized graph and evaluates kernel weights.
    pub fn assemble(x: &Matrix, sel: &[RowSelection], k: usize, n_far: usize, t: f64) -> Result<Self> {
        let m = x.rows();
        check_params(m, k, n_far, t)?;
        if sel.len() != m {
            return Err(Error::Consistency(alloc::format!(
                "{} row selections for {} rows",
                sel.len(),
                m
            )));
        }
        let near_idx = union_lists(m, sel.iter().map(|s| &s.nearest[..]));
        let far_idx = union_lists(m, sel.iter().map(|s| &s.farthest[..]));
        let near = weigh(x, &near_idx, t)?;
        let far = weigh(x, &far_idx, t)?;
        Ok(Self { near, far, t, k, n_far })
    }

    /// Recomputes every stored weight for a new kernel width. Index sets do not
    /// depend on `t`.
    pub fn reweight(&self, x: &Matrix, t: f64) -> Result<Self> {
        check_params(self.len(), self.k, self.n_far, t)?;
        if x.rows() != self.len() {
            return Err(Error::Consistency(alloc::format!(
                "graph has {} rows, data has {}",
                self.len(),
                x.rows()
            )));
        }
        let strip = |l: &Vec<Vec<(usize, f64)>>| -> Vec<Vec<usize>> {
            l.iter().map(|r| r.iter().map(|&(j, _)| j).collect()).collect()
        };
        Ok(Self {
            near: weigh(x, &strip(&self.near), t)?,
            far: weigh(x, &strip(&self.far), t)?,
            t,
            k: self.k,
            n_far: self.n_far,
        })
    }

    /// Rebuilds a graph from an undirected edge list, as produced by
    /// [`NeighborGraph::edges`]. Each unordered pair must appear once per kind.
    pub fn from_edges(
        m: usize,
        k: usize,
        n_far: usize,
        t: f64,
        edges: impl IntoIterator<Item = (usize, usize, f64, EdgeKind)>,
    ) -> Result<Self> {
        check_params(m, k, n_far, t)?;
        let mut near = vec![Vec::new(); m];
        let mut far = vec![Vec::new(); m];
        for (i, j, w, kind) in edges {
            if i >= m || j >= m || i == j {
                bail_arg!("edge ({}, {}) invalid for {} rows", i, j, m);
            }
            if !(w > 0.0 && w <= 1.0) {
                bail_arg!("edge ({}, {}) weight {} outside (0, 1]", i, j, w);
            }
            let lists = match kind {
                EdgeKind::Near => &mut near,
                EdgeKind::Far => &mut far,
            };
            lists[i].push((j, w));
            lists[j].push((i, w));
        }
        for l in near.iter_mut().chain(far.iter_mut()) {
            l.sort_unstable_by_key(|&(j, _)| j);
            if l.windows(2).any(|p| p[0].0 == p[1].0) {
                bail_arg!("duplicate edge in edge list");
            }
        }
        Ok(Self { near, far, t, k, n_far })
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.near.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_far(&self) -> usize {
        self.n_far
    }

    /// Symmetrized neighbor set of row `i` with `H` weights, by index.
    pub fn near(&self, i: usize) -> &[(usize, f64)] {
        &self.near[i]
    }

    /// Symmetrized distant set of row `i` with `W` weights, by index.
    pub fn far(&self, i: usize) -> &[(usize, f64)] {
        &self.far[i]
    }

    pub fn h(&self, i: usize, j: usize) -> f64 {
        lookup(&self.near[i], j)
    }

    pub fn w(&self, i: usize, j: usize) -> f64 {
        lookup(&self.far[i], j)
    }

    /// Each undirected edge once, `i < j`, neighbor edges first.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64, EdgeKind)> + '_ {
        let near = self.near.iter().enumerate().flat_map(|(i, l)| {
            l.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w, EdgeKind::Near))
        });
        let far = self.far.iter().enumerate().flat_map(|(i, l)| {
            l.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w, EdgeKind::Far))
        });
        near.chain(far)
    }
}

fn lookup(list: &[(usize, f64)], j: usize) -> f64 {
    list.binary_search_by_key(&j, |&(c, _)| c).map_or(0.0, |p| list[p].1)
}

fn union_lists<'a>(m: usize, rows: impl Iterator<Item = &'a [usize]>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m];
    for (i, sel) in rows.enumerate() {
        for &j in sel {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

fn weigh(x: &Matrix, idx: &[Vec<usize>], t: f64) -> Result<Vec<Vec<(usize, f64)>>> {
    idx.iter()
        .enumerate()
        .map(|(i, l)| {
            l.iter()
                .map(|&j| {
                    let w = libm::exp(-sq_dist(x.row(i), x.row(j)) / t);
                    if w == 0.0 {
                        bail_arg!(
                            "kernel weight between rows {} and {} underflows at t={}; \
                             normalize the data or increase t",
                            i,
                            j,
                            t
                        );
                    }
                    Ok((j, w))
                })
                .collect()
        })
        .collect()
}

/// Summary counts for logs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub vertices: usize,
    pub near_edges: usize,
    pub far_edges: usize,
    pub near_degree: (usize, usize),
    pub far_degree: (usize, usize),
    pub h_range: (f64, f64),
    pub w_range: (f64, f64),
    /// Ten equal-width bins over `(0, 1]`.
    pub h_histogram: [usize; 10],
    pub w_histogram: [usize; 10],
}

pub fn graph_stats(g: &NeighborGraph) -> GraphStats {
    fn side(lists: &[Vec<(usize, f64)>]) -> (usize, (usize, usize), (f64, f64), [usize; 10]) {
        let mut hist = [0usize; 10];
        let mut deg = (usize::MAX, 0);
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        let mut directed = 0;
        for l in lists {
            deg = (deg.0.min(l.len()), deg.1.max(l.len()));
            directed += l.len();
            for &(_, w) in l {
                range = (range.0.min(w), range.1.max(w));
            }
        }
        for (i, l) in lists.iter().enumerate() {
            for &(j, w) in l {
                if j > i {
                    hist[((w * 10.0) as usize).min(9)] += 1;
                }
            }
        }
        (directed / 2, deg, range, hist)
    }
    let (ne, nd, nr, nh) = side(&g.near);
    let (fe, fd, fr, fh) = side(&g.far);
    GraphStats {
        vertices: g.len(),
        near_edges: ne,
        far_edges: fe,
        near_degree: nd,
        far_degree: fd,
        h_range: nr,
        w_range: fr,
        h_histogram: nh,
        w_histogram: fh,
    }
}
