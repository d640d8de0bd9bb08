//! Brute-force reference implementations and finite-difference helpers.
//!
//! Everything here is written the slow, obvious way: dense matrices, full
//! sorts, direct double sums. Shared with the runner's acceptance target.

#![allow(dead_code)]

use udp_core::graph::NeighborGraph;
use udp_core::rng::Stream;
use udp_core::Matrix;

pub fn random_matrix(rng: &mut Stream, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_vec(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

pub fn direct_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dense_sq_dists(x: &Matrix) -> Vec<Vec<f64>> {
    let m = x.rows();
    (0..m)
        .map(|i| (0..m).map(|j| direct_sq_dist(x.row(i), x.row(j))).collect())
        .collect()
}

/// Sorts each full distance row by (distance, index); neighbors are the head,
/// distant points the tail. Returns dense `H` and `W` after the
/// "either direction" symmetrization.
pub fn brute_graph(x: &Matrix, k: usize, n_far: usize, t: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = x.rows();
    let d = dense_sq_dists(x);
    let mut near = vec![vec![false; m]; m];
    let mut far = vec![vec![false; m]; m];
    for i in 0..m {
        let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[i][a].partial_cmp(&d[i][b]).unwrap().then(a.cmp(&b)));
        for &j in &order[..k] {
            near[i][j] = true;
            near[j][i] = true;
        }
        for &j in order.iter().rev().take(n_far) {
            far[i][j] = true;
            far[j][i] = true;
        }
    }
    let weigh = |mask: &Vec<Vec<bool>>| -> Vec<Vec<f64>> {
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if mask[i][j] { (-d[i][j] / t).exp() } else { 0.0 })
                    .collect()
            })
            .collect()
    };
    (weigh(&near), weigh(&far))
}

pub fn dense_near(g: &NeighborGraph) -> Vec<Vec<f64>> {
    dense(g.len(), |i| g.near(i))
}

pub fn dense_far(g: &NeighborGraph) -> Vec<Vec<f64>> {
    dense(g.len(), |i| g.far(i))
}

fn dense<'a>(m: usize, list: impl Fn(usize) -> &'a [(usize, f64)]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]; m];
    for (i, row) in out.iter_mut().enumerate() {
        for &(j, w) in list(i) {
            row[j] = w;
        }
    }
    out
}

pub fn full_kernel(x: &Matrix, t: f64) -> Vec<Vec<f64>> {
    dense_sq_dists(x)
        .into_iter()
        .map(|r| r.into_iter().map(|d| (-d / t).exp()).collect())
        .collect()
}

/// `c · ΣᵢΣⱼ Aᵢⱼ (xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ` by direct outer products.
pub fn naive_scatter(x: &Matrix, a: &[Vec<f64>], c: f64) -> Matrix {
    let (m, d) = (x.rows(), x.cols());
    let mut s = Matrix::zeros(d, d);
    for i in 0..m {
        for j in 0..m {
            if a[i][j] == 0.0 {
                continue;
            }
            let diff: Vec<f64> = x.row(i).iter().zip(x.row(j)).map(|(p, q)| p - q).collect();
            for r in 0..d {
                for q in 0..d {
                    s.as_mut_slice()[r * d + q] += c * a[i][j] * diff[r] * diff[q];
                }
            }
        }
    }
    s
}

/// `c · ΣᵢΣⱼ Aᵢⱼ (wᵀxᵢ − wᵀxⱼ)²`: project first, then sum.
pub fn direct_objective(x: &Matrix, a: &[Vec<f64>], c: f64, w: &[f64]) -> f64 {
    let y: Vec<f64> = x
        .row_iter()
        .map(|r| r.iter().zip(w).map(|(p, q)| p * q).sum())
        .collect();
    let mut total = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            total += a[i][j] * (y[i] - y[j]) * (y[i] - y[j]);
        }
    }
    c * total
}

/// Anchor ratio `Σ H‖gᵢ−gⱼ‖² / (Σ W‖gᵢ−g_b‖² + eps)`.
pub fn naive_ratio(anchor: &[f64], near: &[(Vec<f64>, f64)], far: &[(Vec<f64>, f64)], eps: f64) -> f64 {
    let a: f64 = near.iter().map(|(g, h)| h * direct_sq_dist(anchor, g)).sum();
    let b: f64 = far.iter().map(|(g, w)| w * direct_sq_dist(anchor, g)).sum();
    a / (b + eps)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_rel_err_matrix(a: &Matrix, b: &Matrix) -> f64 {
    let scale = b.frobenius_norm().max(1e-300);
    a.max_abs_diff(b) / scale
}

/// Central difference of `f` along coordinate `i` of `p`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, p: &[f64], i: usize, h: f64) -> f64 {
    let mut q = p.to_vec();
    q[i] = p[i] + h;
    let up = f(&q);
    q[i] = p[i] - h;
    let down = f(&q);
    (up - down) / (2.0 * h)
}
