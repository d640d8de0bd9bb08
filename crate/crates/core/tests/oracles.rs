//! Fast paths against brute-force references on random instances.

mod common;

use common::*;
use udp_core::graph::{build_graph, pairwise_sq_dists_block, sq_dists_block_with_norms, sq_norms};
use udp_core::nn::{ratio_loss_rows, udp_ratio_loss};
use udp_core::rng::Stream;
use udp_core::udp::{
    distant_scatter, local_scatter, nonlocal_scatter, quadratic_form, solve_projection_with, ScatterPair, SolveOptions,
    UdpVariant, Whitening, DEFAULT_NONLOCAL_CAP,
};
use udp_core::Matrix;

const REL: f64 = 1e-8;

/// (rows, cols, k, n_far) covering small, tie-prone and M = 200 cases.
const SHAPES: &[(usize, usize, usize, usize)] = &[
    (3, 1, 1, 1),
    (12, 2, 3, 4),
    (40, 3, 5, 10),
    (90, 5, 10, 30),
    (200, 4, 10, 50),
];

#[test]
pub fn distance_block_matches_double_loop() {
    let mut rng = Stream::new(1, 0);
    let x = random_matrix(&mut rng, 10, 5, 1.0);
    let naive = dense_sq_dists(&x);
    let block = pairwise_sq_dists_block(&x, 0..10, 0..10);
    for i in 0..10 {
        assert_eq!(block[(i, i)], 0.0);
        for j in 0..10 {
            assert!((block[(i, j)] - naive[i][j]).abs() < 1e-10);
        }
    }
    let part = pairwise_sq_dists_block(&x, 3..7, 2..9);
    for i in 0..4 {
        for j in 0..7 {
            assert!((part[(i, j)] - naive[i + 3][j + 2]).abs() < 1e-10);
        }
    }
}

#[test]
pub fn blocked_and_unblocked_distances_agree() {
    let mut rng = Stream::new(2, 0);
    let x = random_matrix(&mut rng, 150, 7, 3.0);
    let norms = sq_norms(&x);
    let naive = dense_sq_dists(&x);
    for start in (0..150).step_by(37) {
        let end = (start + 37).min(150);
        let b = sq_dists_block_with_norms(&x, &norms, start..end, 0..150);
        for (bi, i) in (start..end).enumerate() {
            for j in 0..150 {
                assert!(rel_err(b[(bi, j)], naive[i][j], 1e-12) < 1e-10, "({i},{j})");
            }
        }
    }
}

#[test]
pub fn graph_matches_full_row_sort() {
    for (s, &(m, d, k, n_far)) in SHAPES.iter().enumerate() {
        for rep in 0..3 {
            let mut rng = Stream::new(10 * s as u64 + rep, 0);
            let x = random_matrix(&mut rng, m, d, 1.0);
            let t = rng.uniform(0.5, 4.0);
            let g = build_graph(&x, k, n_far, t).unwrap();
            let (h, w) = brute_graph(&x, k, n_far, t);
            let (gh, gw) = (dense_near(&g), dense_far(&g));
            for i in 0..m {
                for j in 0..m {
                    assert_eq!(gh[i][j] > 0.0, h[i][j] > 0.0, "H support ({i},{j}) m={m}");
                    assert_eq!(gw[i][j] > 0.0, w[i][j] > 0.0, "W support ({i},{j}) m={m}");
                    assert!((gh[i][j] - h[i][j]).abs() <= 1e-12);
                    assert!((gw[i][j] - w[i][j]).abs() <= 1e-12);
                }
            }
        }
    }
}

fn scatter_cases() -> Vec<(Matrix, udp_core::NeighborGraph)> {
    SHAPES
        .iter()
        .enumerate()
        .map(|(s, &(m, d, k, n_far))| {
            let mut rng = Stream::new(100 + s as u64, 0);
            let x = random_matrix(&mut rng, m, d, 1.0);
            let g = build_graph(&x, k, n_far, 2.0).unwrap();
            (x, g)
        })
        .collect()
}

#[test]
pub fn scatters_match_double_sums() {
    for (x, g) in scatter_cases() {
        let m = x.rows() as f64;
        let h = dense_near(&g);
        let w = dense_far(&g);
        let kern = full_kernel(&x, g.t());
        let k_minus_h: Vec<Vec<f64>> = kern
            .iter()
            .zip(&h)
            .enumerate()
            .map(|(i, (kr, hr))| {
                kr.iter()
                    .zip(hr)
                    .enumerate()
                    .map(|(j, (a, b))| if i == j { 0.0 } else { a - b })
                    .collect()
            })
            .collect();

        let sl = local_scatter(&x, &g).unwrap();
        let sn = nonlocal_scatter(&x, &g, DEFAULT_NONLOCAL_CAP).unwrap();
        let sd = distant_scatter(&x, &g).unwrap();
        assert!(max_rel_err_matrix(&sl, &naive_scatter(&x, &h, 1.0 / (m * m))) < REL);
        assert!(max_rel_err_matrix(&sn, &naive_scatter(&x, &k_minus_h, 1.0 / (m * m))) < REL);
        assert!(max_rel_err_matrix(&sd, &naive_scatter(&x, &w, 1.0 / m)) < REL);

        // local + nonlocal is the scatter of the full kernel
        let mut total = sl.clone();
        total.add_assign(&sn);
        assert!(max_rel_err_matrix(&total, &naive_scatter(&x, &kern, 1.0 / (m * m))) < REL);

        let mut rng = Stream::new(x.rows() as u64, 5);
        for _ in 0..10 {
            let v = random_vec(&mut rng, x.cols());
            for (s, a, c) in [
                (&sl, &h, 1.0 / (m * m)),
                (&sn, &k_minus_h, 1.0 / (m * m)),
                (&sd, &w, 1.0 / m),
            ] {
                let direct = direct_objective(&x, a, c, &v);
                assert!(rel_err(quadratic_form(s, &v), direct, 1e-300) < REL);
            }
        }
    }
}

#[test]
pub fn ratio_loss_matches_direct_sums() {
    for seed in 0..50 {
        let mut rng = Stream::new(seed, 3);
        let g = random_matrix(&mut rng, 30, 3, 1.0);
        let near: Vec<(usize, f64)> = rng
            .sample_indices(29, 5)
            .into_iter()
            .map(|j| (j + 1, rng.uniform(0.01, 1.0)))
            .collect();
        let far: Vec<(usize, f64)> = rng
            .sample_indices(29, 7)
            .into_iter()
            .map(|j| (j + 1, rng.uniform(0.01, 1.0)))
            .collect();
        let mut grad = Matrix::zeros(30, 3);
        let fast = ratio_loss_rows(&g, 0, &near, &far, 1e-12, 1.0, &mut grad).unwrap();
        let own = |set: &[(usize, f64)]| -> Vec<(Vec<f64>, f64)> {
            set.iter().map(|&(j, w)| (g.row(j).to_vec(), w)).collect()
        };
        let slow = naive_ratio(g.row(0), &own(&near), &own(&far), 1e-12);
        assert!(rel_err(fast, slow, 1e-300) < REL);

        let refs = |set: &[(usize, f64)]| -> Vec<(&[f64], f64)> { set.iter().map(|&(j, w)| (g.row(j), w)).collect() };
        let pl = udp_ratio_loss(g.row(0), &refs(&near), &refs(&far), 1e-12).unwrap();
        assert!(rel_err(pl.loss, slow, 1e-300) < REL);
    }
}

fn residual(a: &Matrix, b: &Matrix, v: &[f64], lambda: f64) -> f64 {
    let av = a.matvec(v);
    let bv = b.matvec(v);
    let r: f64 = av.iter().zip(&bv).map(|(p, q)| (p - lambda * q).powi(2)).sum();
    r.sqrt() / v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ridged(s: &Matrix, rho: f64) -> Matrix {
    let mut b = s.clone();
    for i in 0..b.rows() {
        b[(i, i)] += rho;
    }
    b
}

#[test]
pub fn eigen_residuals_are_small() {
    for (x, g) in scatter_cases().into_iter().skip(1) {
        for variant in [UdpVariant::Original, UdpVariant::Improved] {
            let sp = ScatterPair::compute(&x, &g, variant, DEFAULT_NONLOCAL_CAP).unwrap();
            let d = sp.dim();
            let rho = 1e-8 * sp.s_denom.trace() / d as f64;
            let opts = SolveOptions {
                ridge: Some(rho),
                whitening: Whitening::Denominator,
            };
            let p = solve_projection_with(&sp, d, &opts).unwrap();
            let b = ridged(&sp.s_denom, rho);
            for c in 0..d {
                let v = p.basis.column(c);
                assert!(residual(&sp.s_local, &b, &v, p.eigenvalues[c]) < 1e-6);
            }
            assert!(p.eigenvalues.windows(2).all(|w| w[0] <= w[1]));

            // local whitening solves the reciprocal problem
            let rho_l = 1e-8 * sp.s_local.trace() / d as f64;
            let opts = SolveOptions {
                ridge: Some(rho_l),
                whitening: Whitening::Local,
            };
            let p = solve_projection_with(&sp, d, &opts).unwrap();
            let b = ridged(&sp.s_local, rho_l);
            for c in 0..d {
                let v = p.basis.column(c);
                assert!(residual(&sp.s_denom, &b, &v, 1.0 / p.eigenvalues[c]) < 1e-6);
            }
            assert!(p.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

fn random_spd(rng: &mut Stream, d: usize) -> Matrix {
    let a = random_matrix(rng, d, d, 1.0);
    let mut s = a.transpose().matmul(&a).unwrap();
    for i in 0..d {
        s[(i, i)] += 0.1;
    }
    s
}

#[test]
pub fn smallest_eigenvector_beats_random_directions() {
    for seed in 0..10 {
        let mut rng = Stream::new(seed, 11);
        let d = 6;
        let sp = ScatterPair::new(random_spd(&mut rng, d), random_spd(&mut rng, d), UdpVariant::Improved).unwrap();
        let p = solve_projection_with(
            &sp,
            1,
            &SolveOptions {
                ridge: Some(0.0),
                whitening: Whitening::Denominator,
            },
        )
        .unwrap();
        let v1 = p.basis.column(0);
        let q = |v: &[f64]| quadratic_form(&sp.s_local, v) / quadratic_form(&sp.s_denom, v);
        assert!((q(&v1) - p.eigenvalues[0]).abs() < 1e-10 * p.eigenvalues[0].max(1.0));
        for _ in 0..1000 {
            let v = random_vec(&mut rng, d);
            assert!(q(&v1) <= q(&v) + 1e-12);
        }
    }
}

#[test]
pub fn two_elongated_clusters_project_onto_the_separating_axis() {
    let mut rng = Stream::new(4, 0);
    let mut rows = Vec::new();
    for c in [-1.0, 1.0] {
        for _ in 0..60 {
            rows.push([3.0 * c + 0.3 * rng.normal(), 4.0 * rng.normal()]);
        }
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let g = build_graph(&x, 5, 20, 2.0).unwrap();
    let sp = ScatterPair::compute(&x, &g, UdpVariant::Improved, DEFAULT_NONLOCAL_CAP).unwrap();
    let p = solve_projection_with(&sp, 1, &SolveOptions::default()).unwrap();
    let v = p.basis.column(0);

    // dense grid over angles
    let ratio = |w: &[f64]| quadratic_form(&sp.s_local, w) / quadratic_form(&sp.s_denom, w);
    let best = (0..3600)
        .map(|a| {
            let th = a as f64 * core::f64::consts::PI / 3600.0;
            [th.cos(), th.sin()]
        })
        .min_by(|a, b| ratio(a).total_cmp(&ratio(b)))
        .unwrap();
    assert!((v[0] * best[0] + v[1] * best[1]).abs() > 0.99);
    // cluster means differ along axis 0
    assert!(v[0].abs() > 0.99, "{v:?}");
}
