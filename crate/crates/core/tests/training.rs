//! End-to-end behavior of the semi-supervised trainer on small synthetic data.

mod common;

use udp_core::graph::build_graph;
use udp_core::nn::{adam_step, softmax_ce, udp_ratio_loss, AdamState, GradientSet, Mlp, Placement};
use udp_core::rng::Stream;
use udp_core::trainer::{pool_matrix, predict, train, train_traced, Regularizer, StepMode, TrainConfig, TrainInputs};
use udp_core::{Dataset, Error, Matrix, SemiSplit};

/// Three Gaussian blobs in 6 dimensions.
fn blobs(per_class: usize, seed: u64) -> Dataset {
    let mut rng = Stream::new(seed, 77);
    let centers = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for k in 0..6 {
                data.push(center.get(k).copied().unwrap_or(0.0) + 0.8 * rng.normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(3 * per_class, 6, data).unwrap(), Some(labels), Some(3)).unwrap()
}

fn setup(placement: Placement) -> (SemiSplit, udp_core::NeighborGraph, TrainConfig) {
    let split = blobs(60, 1).split_semi(12, 90, 3).unwrap();
    let pool = split.pool_features();
    let mut cfg = TrainConfig::for_graph(5, 20, 4.0);
    cfg.placement = placement;
    cfg.labeled_batch = 6;
    cfg.anchors_per_step = 8;
    cfg.iterations = Some(100);
    cfg.adam.lr = 1e-2;
    let g = build_graph(&pool, cfg.k, cfg.n_far, cfg.t).unwrap();
    (split, g, cfg)
}

fn net(placement: Placement) -> Mlp {
    Mlp::init(&[6, 8, 5, 3], placement, 11).unwrap()
}

#[test]
fn identical_inputs_give_identical_reports() {
    for mode in [StepMode::Alternating, StepMode::Combined] {
        let (split, g, mut cfg) = setup(Placement::Auxiliary);
        cfg.step_mode = mode;
        let (n1, r1) = train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Auxiliary)).unwrap();
        let (n2, r2) = train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Auxiliary)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(n1, n2);
        assert_eq!(r1.sup_loss.len(), 100);
    }
}

#[test]
fn zero_lambda_matches_no_regularizer() {
    let (split, g, mut cfg) = setup(Placement::Output);
    cfg.lambda = 0.0;
    let (n_udp, r_udp) = train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Output)).unwrap();
    cfg.regularizer = Regularizer::None;
    cfg.lambda = 0.5;
    let (n_none, r_none) = train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Output)).unwrap();
    assert_eq!(r_udp.sup_loss, r_none.sup_loss);
    assert_eq!(r_udp.combined, r_none.combined);
    assert!(r_udp.unsup_loss.iter().all(|&u| u == 0.0));
    assert_eq!(n_udp, n_none);
}

/// Recomputes every logged loss from the sampling trace with a separate,
/// one-anchor-at-a-time forward pass, replaying the optimizer alongside.
#[test]
fn logged_losses_replay_offline() {
    for (placement, reg) in [
        (Placement::Output, Regularizer::Udp),
        (Placement::Middle, Regularizer::Udp),
        (Placement::Auxiliary, Regularizer::Laplacian),
    ] {
        let (split, g, mut cfg) = setup(placement);
        cfg.regularizer = reg;
        let inputs = TrainInputs::from_split(&split);
        let (_, report, trace) = train_traced(&cfg, inputs, &g, net(placement)).unwrap();
        let pool = pool_matrix(&inputs).unwrap();
        let labels = split.labeled.labels().unwrap();

        let mut m = net(placement);
        let mut adam = AdamState::new(&m, cfg.adam);
        for (it, step) in trace.iter().enumerate() {
            let xb = split.labeled.features().select_rows(&step.batch);
            let yb: Vec<usize> = step.batch.iter().map(|&i| labels[i]).collect();
            let fp = m.forward(&xb).unwrap();
            let (sup, d) = softmax_ce(&fp.logits, &yb).unwrap();
            assert!((sup - report.sup_loss[it]).abs() < 1e-10, "iteration {it}");
            let grads = m.backward(&fp.cache, Some(&d), None).unwrap();
            adam_step(&mut m, &grads, &mut adam).unwrap();

            let n = step.anchors.len() as f64;
            let mut total = 0.0;
            let mut unsup_grads = GradientSet::zeros_like(&m);
            for a in &step.anchors {
                let rows: Vec<usize> = std::iter::once(a.anchor)
                    .chain(a.near.iter().map(|p| p.0))
                    .chain(a.far.iter().map(|p| p.0))
                    .collect();
                let fp = m.forward(&pool.select_rows(&rows)).unwrap();
                let e = &fp.embedding;
                let near: Vec<(&[f64], f64)> = (0..a.near.len()).map(|k| (e.row(1 + k), a.near[k].1)).collect();
                let far: Vec<(&[f64], f64)> = (0..a.far.len())
                    .map(|k| (e.row(1 + a.near.len() + k), a.far[k].1))
                    .collect();
                let l = match reg {
                    Regularizer::Udp => udp_ratio_loss(e.row(0), &near, &far, cfg.ratio_eps).unwrap(),
                    _ => udp_core::nn::laplacian_loss(e.row(0), &near).unwrap(),
                };
                total += l.loss;
                let mut d_e = Matrix::zeros(e.rows(), e.cols());
                for (r, gvec) in std::iter::once(&l.d_anchor)
                    .chain(&l.d_neighbors)
                    .chain(&l.d_distants)
                    .enumerate()
                {
                    for (c, v) in gvec.iter().enumerate() {
                        d_e[(r, c)] = cfg.lambda / n * v;
                    }
                }
                unsup_grads.add_assign(&m.backward(&fp.cache, None, Some(&d_e)).unwrap());
            }
            let unsup = total / n;
            assert!(
                (unsup - report.unsup_loss[it]).abs() < 1e-10 * unsup.max(1.0),
                "iteration {it}"
            );
            assert_eq!(
                report.combined[it],
                report.sup_loss[it] + cfg.lambda * report.unsup_loss[it]
            );
            adam_step(&mut m, &unsup_grads, &mut adam).unwrap();
        }
    }
}

#[test]
fn training_beats_the_untrained_network() {
    let (split, g, mut cfg) = setup(Placement::Output);
    cfg.iterations = Some(300);
    let before = predict(&net(Placement::Output), split.labeled.features()).unwrap();
    let (trained, report) = train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Output)).unwrap();
    let after = predict(&trained, split.labeled.features()).unwrap();
    let truth = split.labeled.labels().unwrap();
    let acc = |p: &[usize]| udp_core::eval::accuracy(p, truth).unwrap();
    assert!(acc(&after) >= acc(&before));
    let test = split.test.as_ref().unwrap();
    let untrained = predict(&net(Placement::Output), test.features()).unwrap();
    let untrained = udp_core::eval::accuracy(&untrained, test.labels().unwrap()).unwrap();
    assert!(
        report.test_accuracy.unwrap() > untrained,
        "{:?} vs {untrained}",
        report.test_accuracy
    );
    let tenth = report.sup_loss.len() / 10;
    let median = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&report.sup_loss[report.sup_loss.len() - tenth..]) < median(&report.sup_loss[..tenth]));
}

#[test]
fn graph_over_a_different_row_order_is_rejected() {
    let (split, _, cfg) = setup(Placement::Output);
    let pool = split.pool_features();
    let mut order: Vec<usize> = (0..pool.rows()).collect();
    order.reverse();
    let g = build_graph(&pool.select_rows(&order), cfg.k, cfg.n_far, cfg.t).unwrap();
    match train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Output)) {
        Err(Error::Consistency(_)) => {}
        other => panic!("{other:?}"),
    }
    let small = build_graph(&pool.select_rows(&order[..50]), cfg.k, cfg.n_far, cfg.t).unwrap();
    assert!(matches!(
        train(&cfg, TrainInputs::from_split(&split), &small, net(Placement::Output)),
        Err(Error::Consistency(_))
    ));
}

#[test]
fn placement_mismatch_is_an_argument_error() {
    let (split, g, cfg) = setup(Placement::Output);
    assert!(matches!(
        train(&cfg, TrainInputs::from_split(&split), &g, net(Placement::Middle)),
        Err(Error::Argument(_))
    ));
}

#[test]
fn overflowing_loss_reports_the_iteration() {
    let (split, g, mut cfg) = setup(Placement::Output);
    cfg.regularizer = Regularizer::None;
    let mut big = net(Placement::Output);
    for s in big.param_slices_mut() {
        s.iter_mut().for_each(|v| *v *= 1e200);
    }
    match train(&cfg, TrainInputs::from_split(&split), &g, big) {
        Err(Error::Training { iteration, .. }) => assert_eq!(iteration, 0),
        other => panic!("{other:?}"),
    }
}
