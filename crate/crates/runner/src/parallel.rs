//! Multi-threaded drivers for the row-separable kernels in `udp-core`.
//!
//! Work is cut into fixed row blocks and partial results are combined in block
//! order, so output does not depend on the thread count.

use std::ops::Range;

use rayon::prelude::*;
use udp_core::eval::{self, ClusterResult};
use udp_core::graph::{self, NeighborGraph};
use udp_core::udp::{self, ScatterKind, ScatterPair, UdpVariant};
use udp_core::Matrix;

use crate::error::Result;

pub const PAR_BLOCK: usize = 256;

fn blocks(m: usize) -> Vec<Range<usize>> {
    (0..m).step_by(PAR_BLOCK).map(|s| s..(s + PAR_BLOCK).min(m)).collect()
}

pub fn build_graph(x: &Matrix, k: usize, n_far: usize, t: f64) -> Result<NeighborGraph> {
    let m = x.rows();
    if k == 0 || k >= m || n_far == 0 || n_far >= m || !(t > 0.0) {
        // the serial builder reports the precise problem
        return Ok(graph::build_graph(x, k, n_far, t)?);
    }
    let norms = graph::sq_norms(x);
    let sel: Vec<_> = blocks(m)
        .into_par_iter()
        .map(|r| graph::select_rows(x, &norms, r, k, n_far))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(NeighborGraph::assemble(x, &sel, k, n_far, t)?)
}

pub fn scatter(x: &Matrix, g: &NeighborGraph, kind: ScatterKind) -> Result<Matrix> {
    let partials = blocks(x.rows())
        .into_par_iter()
        .map(|r| udp::scatter_partial(x, g, kind, r))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut sum = Matrix::zeros(x.cols(), x.cols());
    for p in &partials {
        sum.add_assign(p);
    }
    Ok(udp::finish_scatter(sum, kind, x.rows()))
}

pub fn scatter_pair(x: &Matrix, g: &NeighborGraph, variant: UdpVariant, nonlocal_cap: usize) -> Result<ScatterPair> {
    let denom = match variant {
        UdpVariant::Original => {
            udp::check_nonlocal_cap(x.rows(), nonlocal_cap)?;
            ScatterKind::Nonlocal
        }
        UdpVariant::Improved => ScatterKind::Distant,
    };
    let s_local = scatter(x, g, ScatterKind::Local)?;
    let s_denom = scatter(x, g, denom)?;
    Ok(ScatterPair::new(s_local, s_denom, variant)?)
}

/// Restarts run concurrently; the winner is chosen exactly as in
/// [`eval::kmeans`].
pub fn kmeans(y: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    let runs = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| eval::kmeans_restart(y, k, seed, r))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(eval::best_of(runs))
}
