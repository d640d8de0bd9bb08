//! Unsupervised discriminant projection as linear dimension reduction.
//!
//! Every scatter here has the form `c · ΣᵢΣⱼ Aᵢⱼ (xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ` for a
//! symmetric weight matrix `A`, which equals `2c · Xᵀ(D − A)X` with `D` the
//! diagonal of row sums. Accumulation goes through that Laplacian form one
//! row at a time: row `i` contributes `xᵢ yᵢᵀ` with
//! `yᵢ = Dᵢᵢ xᵢ − Σⱼ Aᵢⱼ xⱼ`.
//!
//! | scatter  | weights                         | `c`    |
//! |----------|---------------------------------|--------|
//! | local    | `H` (stored neighbor weights)   | `1/M²` |
//! | nonlocal | full kernel `K` minus `H`       | `1/M²` |
//! | distant  | `W` (stored distant weights)    | `1/M`  |

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{bail_arg, Error, Result};
use crate::graph::{sq_dists_block_with_norms, sq_norms, NeighborGraph, ROW_BLOCK};
use crate::linalg::{cholesky, lower_inverse, symmetric_eigen};
use crate::matrix::{axpy, dot, Matrix};

/// Default row cap for the all-pairs nonlocal scatter.
pub const DEFAULT_NONLOCAL_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScatterKind {
    Local,
    /// Original UDP denominator over all non-neighbor pairs.
    Nonlocal,
    /// Improved UDP denominator over the N-farthest pairs.
    Distant,
}

impl ScatterKind {
    fn normalizer(self, m: usize) -> f64 {
        match self {
            ScatterKind::Local | ScatterKind::Nonlocal => 1.0 / (m as f64 * m as f64),
            ScatterKind::Distant => 1.0 / m as f64,
        }
    }
}

fn check_graph(x: &Matrix, g: &NeighborGraph) -> Result<()> {
    if x.rows() != g.len() {
        bail_arg!("graph has {} rows but data has {}", g.len(), x.rows());
    }
    Ok(())
}

/// Adds `xᵢ yᵢᵀ` into `acc`, skipping zero entries of `xᵢ` (pixel data is
/// mostly zeros).
fn add_outer(acc: &mut Matrix, xi: &[f64], yi: &[f64]) {
    for (a, &xa) in xi.iter().enumerate() {
        if xa != 0.0 {
            axpy(xa, yi, acc.row_mut(a));
        }
    }
}

fn sparse_rows<'g>(x: &Matrix, rows: Range<usize>, adj: impl Fn(usize) -> &'g [(usize, f64)], acc: &mut Matrix) {
    let mut y = vec![0.0; x.cols()];
    for i in rows {
        let xi = x.row(i);
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut deg = 0.0;
        for &(j, w) in adj(i) {
            deg += w;
            axpy(-w, x.row(j), &mut y);
        }
        axpy(deg, xi, &mut y);
        add_outer(acc, xi, &y);
    }
}

/// Unnormalized, unsymmetrized contribution of rows `rows` to a scatter.
///
/// Summing the partials of any partition of `0..M` and passing the sum to
/// [`finish_scatter`] gives the full matrix, which is how callers spread the
/// work over threads.
pub fn scatter_partial(x: &Matrix, g: &NeighborGraph, kind: ScatterKind, rows: Range<usize>) -> Result<Matrix> {
    check_graph(x, g)?;
    let d = x.cols();
    let mut acc = Matrix::zeros(d, d);
    match kind {
        ScatterKind::Local => sparse_rows(x, rows, |i| g.near(i), &mut acc),
        ScatterKind::Distant => sparse_rows(x, rows, |i| g.far(i), &mut acc),
        ScatterKind::Nonlocal => {
            let m = x.rows();
            let norms = sq_norms(x);
            let t = g.t();
            let mut y = vec![0.0; d];
            let mut start = rows.start;
            while start < rows.end {
                let end = (start + ROW_BLOCK).min(rows.end);
                let block = sq_dists_block_with_norms(x, &norms, start..end, 0..m);
                for (bi, i) in (start..end).enumerate() {
                    let near = g.near(i);
                    let mut next_near = near.iter().map(|p| p.0).peekable();
                    y.iter_mut().for_each(|v| *v = 0.0);
                    let mut deg = 0.0;
                    for (j, &dist) in block.row(bi).iter().enumerate() {
                        // K_ij - H_ij vanishes on neighbor pairs
                        if next_near.peek() == Some(&j) {
                            next_near.next();
                            continue;
                        }
                        if j == i {
                            continue;
                        }
                        let k = libm::exp(-dist / t);
                        if k == 0.0 {
                            continue;
                        }
                        deg += k;
                        axpy(-k, x.row(j), &mut y);
                    }
                    let xi = x.row(i);
                    axpy(deg, xi, &mut y);
                    add_outer(&mut acc, xi, &y);
                }
                start = end;
            }
        }
    }
    Ok(acc)
}

/// Symmetrizes and scales a summed partial into the final scatter.
pub fn finish_scatter(mut sum: Matrix, kind: ScatterKind, m: usize) -> Matrix {
    sum.symmetrize();
    sum.scale(2.0 * kind.normalizer(m));
    sum
}

/// Local scatter: `(1/M²) ΣᵢΣⱼ Hᵢⱼ (xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ`.
pub fn local_scatter(x: &Matrix, g: &NeighborGraph) -> Result<Matrix> {
    let s = scatter_partial(x, g, ScatterKind::Local, 0..x.rows())?;
    Ok(finish_scatter(s, ScatterKind::Local, x.rows()))
}

/// Distant scatter: `(1/M) ΣᵢΣ_{j ∈ Dᴺ(i)} Wᵢⱼ (xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ`.
pub fn distant_scatter(x: &Matrix, g: &NeighborGraph) -> Result<Matrix> {
    let s = scatter_partial(x, g, ScatterKind::Distant, 0..x.rows())?;
    Ok(finish_scatter(s, ScatterKind::Distant, x.rows()))
}

/// Nonlocal scatter of the original method:
/// `(1/M²) ΣᵢΣⱼ (Kᵢⱼ − Hᵢⱼ)(xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ`, with `K` the Gaussian kernel
/// over all pairs. Quadratic in `M`; refuses inputs above `cap` rows.
pub fn nonlocal_scatter(x: &Matrix, g: &NeighborGraph, cap: usize) -> Result<Matrix> {
    check_nonlocal_cap(x.rows(), cap)?;
    let s = scatter_partial(x, g, ScatterKind::Nonlocal, 0..x.rows())?;
    Ok(finish_scatter(s, ScatterKind::Nonlocal, x.rows()))
}

pub fn check_nonlocal_cap(m: usize, cap: usize) -> Result<()> {
    if m > cap {
        return Err(Error::Size {
            size: m,
            cap,
            hint: "the all-pairs nonlocal scatter is for small data; use the improved (distant) scatter",
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UdpVariant {
    /// Local over nonlocal scatter.
    Original,
    /// Local over distant scatter.
    Improved,
}

/// Numerator and denominator of the scatter ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub s_local: Matrix,
    pub s_denom: Matrix,
    pub variant: UdpVariant,
}

impl ScatterPair {
    pub fn new(s_local: Matrix, s_denom: Matrix, variant: UdpVariant) -> Result<Self> {
        let d = s_local.rows();
        if s_local.cols() != d || s_denom.rows() != d || s_denom.cols() != d {
            bail_arg!(
                "scatter shapes {}x{} and {}x{} must be equal and square",
                s_local.rows(),
                s_local.cols(),
                s_denom.rows(),
                s_denom.cols()
            );
        }
        Ok(Self {
            s_local,
            s_denom,
            variant,
        })
    }

    /// Builds both scatters on one thread.
    pub fn compute(x: &Matrix, g: &NeighborGraph, variant: UdpVariant, nonlocal_cap: usize) -> Result<Self> {
        let s_local = local_scatter(x, g)?;
        let s_denom = match variant {
            UdpVariant::Original => nonlocal_scatter(x, g, nonlocal_cap)?,
            UdpVariant::Improved => distant_scatter(x, g)?,
        };
        Self::new(s_local, s_denom, variant)
    }

    pub fn dim(&self) -> usize {
        self.s_local.rows()
    }
}

/// `d × r` projection basis with the scatter ratio of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    /// Unit-length columns.
    pub basis: Matrix,
    /// Ascending ratios `vᵀS_L v / vᵀB v`, where `B` is the (ridged)
    /// denominator used by the solver.
    pub eigenvalues: Vec<f64>,
}

/// Which side of the ratio is Cholesky-whitened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Whitening {
    /// Solve `S_L v = λ (S_denom + ρI) v` for the smallest `λ`.
    Denominator,
    /// Solve `S_denom v = μ (S_L + ρI) v` for the largest `μ`, reported as
    /// `λ = 1/μ`. Same stationary directions when both scatters are definite,
    /// but directions where both scatters vanish (constant pixels, say) get
    /// `μ = 0` and drop to the end instead of winning the minimization.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Ridge `ρ`. `None` means `1e-8 · trace(S) / d` of the whitened matrix.
    pub ridge: Option<f64>,
    pub whitening: Whitening,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            ridge: None,
            whitening: Whitening::Denominator,
        }
    }
}

/// Relative default ridge.
pub const RIDGE_SCALE: f64 = 1e-8;

pub fn default_ridge(s: &Matrix) -> f64 {
    RIDGE_SCALE * s.trace() / s.rows() as f64
}

/// The `r` generalized eigenvectors of `(S_L, S_denom + ρI)` with the
/// smallest eigenvalues.
pub fn solve_projection(sp: &ScatterPair, r: usize, ridge: Option<f64>) -> Result<LinearProjection> {
    solve_projection_with(
        sp,
        r,
        &SolveOptions {
            ridge,
            whitening: Whitening::Denominator,
        },
    )
}

pub fn solve_projection_with(sp: &ScatterPair, r: usize, opts: &SolveOptions) -> Result<LinearProjection> {
    let d = sp.dim();
    if r == 0 || r > d {
        bail_arg!("target dimension r={} must be in 1..={}", r, d);
    }
    let (whiten, other) = match opts.whitening {
        Whitening::Denominator => (&sp.s_denom, &sp.s_local),
        Whitening::Local => (&sp.s_local, &sp.s_denom),
    };
    let ridge = opts.ridge.unwrap_or_else(|| default_ridge(whiten));
    if !(ridge >= 0.0) {
        bail_arg!("ridge must be non-negative, got {}", ridge);
    }
    let mut b = whiten.clone();
    for i in 0..d {
        b[(i, i)] += ridge;
    }
    let l = cholesky(&b)?;
    let l_inv = lower_inverse(&l);
    let mut c = l_inv.matmul(other)?.matmul(&l_inv.transpose())?;
    c.symmetrize();
    let eig = symmetric_eigen(&c)?;

    // back-transform: v = L⁻ᵀ q
    let l_inv_t = l_inv.transpose();
    let pick: Vec<usize> = match opts.whitening {
        Whitening::Denominator => (0..r).collect(),
        Whitening::Local => (0..r).map(|k| d - 1 - k).collect(),
    };
    let mut basis = Matrix::zeros(d, r);
    let mut eigenvalues = Vec::with_capacity(r);
    for (col, &k) in pick.iter().enumerate() {
        let q = eig.vectors.column(k);
        let mut v = l_inv_t.matvec(&q);
        let n = libm::sqrt(dot(&v, &v));
        if !(n > 0.0) {
            return Err(Error::Consistency(format!("degenerate eigenvector {k}")));
        }
        v.iter_mut().for_each(|x| *x /= n);
        for (a, &va) in v.iter().enumerate() {
            basis[(a, col)] = va;
        }
        eigenvalues.push(match opts.whitening {
            Whitening::Denominator => eig.values[k],
            Whitening::Local => 1.0 / eig.values[k],
        });
    }
    Ok(LinearProjection { basis, eigenvalues })
}

/// `X · basis`.
pub fn project(x: &Matrix, p: &LinearProjection) -> Result<Matrix> {
    if x.cols() != p.basis.rows() {
        bail_arg!(
            "data has {} columns but projection expects {}",
            x.cols(),
            p.basis.rows()
        );
    }
    x.matmul(&p.basis)
}

/// `vᵀ A v`.
pub fn quadratic_form(a: &Matrix, v: &[f64]) -> f64 {
    dot(v, &a.matvec(v))
}
