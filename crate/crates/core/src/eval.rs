//! k-means clustering and the purity/accuracy metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail_arg, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::rng::{streams, Stream};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    /// `k × r`.
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

/// Best-of-`restarts` Lloyd's algorithm with k-means++ seeding. Restart `i`
/// draws from its own stream, so restarts can also be run independently via
/// [`kmeans_restart`] and merged with [`best_of`].
pub fn kmeans(y: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    check(y, k)?;
    let runs: Vec<ClusterResult> = (0..restarts.max(1))
        .map(|i| kmeans_restart(y, k, seed, i))
        .collect::<Result<_>>()?;
    Ok(best_of(runs))
}

/// Lowest inertia wins; ties go to the earliest run.
pub fn best_of(runs: Vec<ClusterResult>) -> ClusterResult {
    let mut best: Option<ClusterResult> = None;
    for r in runs {
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    best.expect("at least one run")
}

fn check(y: &Matrix, k: usize) -> Result<()> {
    if k == 0 || k > y.rows() {
        bail_arg!("k={} must be in 1..={}", k, y.rows());
    }
    Ok(())
}

pub fn kmeans_restart(y: &Matrix, k: usize, seed: u64, restart: usize) -> Result<ClusterResult> {
    check(y, k)?;
    let mut rng = Stream::new(seed, streams::KMEANS | ((restart as u64) << 32));
    let m = y.rows();
    let r = y.cols();
    let mut centroids = plus_plus(y, k, &mut rng);
    let mut assignments = vec![usize::MAX; m];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        for i in 0..m {
            let (c, d) = nearest(y.row(i), &centroids);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, r);
        let mut counts = vec![0usize; k];
        for i in 0..m {
            let c = assignments[i];
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(y.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the point worst served by its centroid
                let far = (0..m)
                    .max_by(|&a, &b| {
                        let da = sq_dist(y.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(y.row(b), centroids.row(assignments[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty data");
                centroids.row_mut(c).copy_from_slice(y.row(far));
                assignments[far] = c;
            } else {
                let n = counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / n;
                }
            }
        }
    }
    let inertia = (0..m).map(|i| sq_dist(y.row(i), centroids.row(assignments[i]))).sum();
    Ok(ClusterResult {
        assignments,
        centroids,
        inertia,
        history,
    })
}

fn nearest(p: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(p, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(y: &Matrix, k: usize, rng: &mut Stream) -> Matrix {
    let m = y.rows();
    let mut centroids = Matrix::zeros(k, y.cols());
    let first = rng.index(m);
    centroids.row_mut(0).copy_from_slice(y.row(first));
    let mut d2: Vec<f64> = (0..m).map(|i| sq_dist(y.row(i), y.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.unit() * total;
            let mut acc = 0.0;
            let mut chosen = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(m)
        };
        centroids.row_mut(c).copy_from_slice(y.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(y.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn contingency(assignments: &[usize], labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    if assignments.len() != labels.len() {
        bail_arg!("{} assignments vs {} labels", assignments.len(), labels.len());
    }
    if assignments.is_empty() {
        bail_arg!("purity of an empty assignment");
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let c = labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; c]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[a][l] += 1;
    }
    Ok(table)
}

/// Majority-class purity: each cluster counts its most common label.
pub fn purity(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    let table = contingency(assignments, labels)?;
    let hits: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / labels.len() as f64)
}

/// Purity under the best one-to-one cluster/class matching (Hungarian
/// assignment on the contingency table).
pub fn matched_purity(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    let table = contingency(assignments, labels)?;
    let n = table.len().max(table[0].len());
    let mut cost = vec![vec![0i64; n]; n];
    for (a, row) in table.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            cost[a][l] = -(v as i64);
        }
    }
    let matched = hungarian(&cost);
    let hits: usize = matched
        .iter()
        .enumerate()
        .filter(|&(a, &l)| a < table.len() && l < table[a].len())
        .map(|(a, &l)| table[a][l])
        .sum();
    Ok(hits as f64 / labels.len() as f64)
}

/// Minimum-cost perfect matching on a square matrix; returns the column
/// assigned to each row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        bail_arg!("{} predictions vs {} labels", pred.len(), truth.len());
    }
    if pred.is_empty() {
        bail_arg!("accuracy of an empty prediction");
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}
