//! On-disk graph cache keyed by a SHA-256 of the feature bits and the graph
//! parameters.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};
use udp_core::graph::NeighborGraph;
use udp_core::Matrix;

use crate::edges::{read_edges, write_edges};
use crate::error::{io_err, Result};
use crate::parallel;

pub fn graph_key(x: &Matrix, k: usize, n_far: usize, t: f64) -> String {
    let mut h = Sha256::new();
    h.update(b"udp-graph-v1");
    for v in [x.rows() as u64, x.cols() as u64, k as u64, n_far as u64, t.to_bits()] {
        h.update(v.to_le_bytes());
    }
    for v in x.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Loads the graph for `(x, k, n_far, t)` from `dir` or builds and stores it.
/// Without a directory the graph is always built.
pub fn graph(dir: Option<&Path>, x: &Matrix, k: usize, n_far: usize, t: f64) -> Result<NeighborGraph> {
    let Some(dir) = dir else {
        return parallel::build_graph(x, k, n_far, t);
    };
    let path: PathBuf = dir.join(format!("{}.edges", graph_key(x, k, n_far, t)));
    if path.exists() {
        log::info!("graph cache hit {}", path.display());
        return read_edges(&path);
    }
    let g = parallel::build_graph(x, k, n_far, t)?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    // write then rename so a concurrent reader never sees a partial file
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let seq = SEQ.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp{}-{seq}", std::process::id()));
    write_edges(&tmp, &g)?;
    std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
    log::info!("graph cached at {}", path.display());
    Ok(g)
}
