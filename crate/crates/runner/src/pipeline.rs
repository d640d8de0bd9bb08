//! The `reduce`, `train`, `sweep` and `export` commands.
//!
//! Every command writes its resolved config to `<out>/config.txt` first.
//! Output files contain no timestamps or timings, so rerunning the echoed
//! config reproduces them byte for byte.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use udp_core::eval::{accuracy, matched_purity, purity};
use udp_core::graph::{graph_stats, NeighborGraph};
use udp_core::nn::Mlp;
use udp_core::trainer::{self, TrainInputs, TrainReport};
use udp_core::udp::{self, LinearProjection, SolveOptions};
use udp_core::{Dataset, Matrix, SemiSplit};

use crate::config::{render, DataFormat, PurityKind, RunConfig};
use crate::csv::{append_table, load_csv, read_matrix, write_matrix, write_table};
use crate::error::{io_err, Error, Result, StageExt};
use crate::{cache, checkpoint, idx, parallel};

/// Training set and optional external test set, after class filtering,
/// subsampling and normalization.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    cfg.validate_data()?;
    let (train, test) = match cfg.format {
        DataFormat::Idx => {
            let train = idx::load_idx(cfg.images.as_deref().unwrap(), cfg.labels.as_deref().unwrap())?;
            let test = match (&cfg.test_images, &cfg.test_labels) {
                (Some(i), Some(l)) => Some(idx::load_idx(i, l)?),
                _ => None,
            };
            (train, test)
        }
        DataFormat::Csv => {
            let train = load_csv(cfg.csv.as_deref().unwrap(), cfg.csv_labels)?;
            let test = cfg.test_csv.as_deref().map(|p| load_csv(p, true)).transpose()?;
            (train, test)
        }
    };
    let prepare = |ds: Dataset, sample: bool| -> Result<Dataset> {
        let ds = if cfg.classes.is_empty() {
            ds
        } else {
            ds.filter_classes(&cfg.classes)?
        };
        let ds = match cfg.subsample {
            Some(n) if sample => ds.subsample(n, cfg.seed)?,
            _ => ds,
        };
        Ok(ds.normalize(cfg.normalize))
    };
    let train = prepare(train, true)?;
    let test = test.map(|t| prepare(t, false)).transpose()?;
    if let Some(t) = &test {
        if t.dim() != train.dim() {
            return Err(Error::Consistency(format!(
                "test set has {} features, training set {}",
                t.dim(),
                train.dim()
            )));
        }
    }
    log::info!(
        "loaded {} rows x {} features, {} classes",
        train.len(),
        train.dim(),
        train.class_count()
    );
    Ok((train, test))
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join("config.txt");
    std::fs::write(&path, cfg.echo()).map_err(io_err(path))
}

fn write_summary(cfg: &RunConfig, line: &str) -> Result<()> {
    let path = cfg.out.join("summary.txt");
    std::fs::write(&path, format!("{line}\n")).map_err(io_err(path))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn graph_for(cfg: &RunConfig, x: &Matrix) -> Result<NeighborGraph> {
    let g = cache::graph(cfg.cache_dir.as_deref(), x, cfg.k, cfg.n_far, cfg.t)?;
    let s = graph_stats(&g);
    log::info!(
        "graph: {} near edges (degree {}..{}), {} far edges (degree {}..{}), H in [{:.3e}, {:.3e}], W in [{:.3e}, {:.3e}]",
        s.near_edges,
        s.near_degree.0,
        s.near_degree.1,
        s.far_edges,
        s.far_degree.0,
        s.far_degree.1,
        s.h_range.0,
        s.h_range.1,
        s.w_range.0,
        s.w_range.1
    );
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOutcome {
    pub projection: LinearProjection,
    pub embedding: Matrix,
    pub assignments: Vec<usize>,
    pub purity: f64,
    pub matched_purity: f64,
    pub summary: String,
}

pub fn reduce(cfg: &RunConfig) -> Result<ReduceOutcome> {
    prepare_out(cfg).stage("output")?;
    let started = Instant::now();
    let (ds, _) = load_data(cfg).stage("load")?;
    let labels = ds
        .labels()
        .ok_or_else(|| Error::Config("reduce needs labels for purity".into()))
        .stage("load")?;
    let x = ds.features();
    let g = graph_for(cfg, x).stage("graph")?;
    let sp = parallel::scatter_pair(x, &g, cfg.method, cfg.nonlocal_cap).stage("scatter")?;
    let opts = SolveOptions {
        ridge: cfg.ridge,
        whitening: cfg.whitening,
    };
    let p = udp::solve_projection_with(&sp, cfg.dims, &opts).stage("solve")?;
    log::info!("eigenvalues: {:?}", p.eigenvalues);
    let y = udp::project(x, &p).stage("project")?;
    let k = cfg.clusters.unwrap_or(ds.class_count());
    let clusters = parallel::kmeans(&y, k, cfg.seed, cfg.restarts).stage("cluster")?;
    let majority = purity(&clusters.assignments, labels).stage("metrics")?;
    let matched = matched_purity(&clusters.assignments, labels).stage("metrics")?;
    let reported = match cfg.purity {
        PurityKind::Majority => majority,
        PurityKind::Matched => matched,
    };

    let out = &cfg.out;
    let header: Vec<String> = (0..cfg.dims)
        .map(|c| format!("y{c}"))
        .chain(["label".into(), "cluster".into()])
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = y.row_iter().enumerate().map(|(i, r)| {
        let mut v: Vec<String> = r.iter().copied().map(fmt).collect();
        v.push(labels[i].to_string());
        v.push(clusters.assignments[i].to_string());
        v
    });
    write_table(&out.join("embedding.csv"), &header_ref, rows).stage("write")?;
    write_matrix(&out.join("basis.csv"), &p.basis).stage("write")?;
    write_table(
        &out.join("eigenvalues.csv"),
        &["component", "eigenvalue"],
        p.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &e)| vec![i.to_string(), fmt(e)]),
    )
    .stage("write")?;
    let metrics_header = [
        "command",
        "method",
        "rows",
        "dims",
        "k",
        "n_far",
        "t",
        "seed",
        "inertia",
        "purity",
        "matched_purity",
    ];
    let metrics = vec![
        "reduce".to_string(),
        render(&cfg.method),
        ds.len().to_string(),
        cfg.dims.to_string(),
        cfg.k.to_string(),
        cfg.n_far.to_string(),
        fmt(cfg.t),
        cfg.seed.to_string(),
        fmt(clusters.inertia),
        fmt(majority),
        fmt(matched),
    ];
    write_table(&out.join("metrics.csv"), &metrics_header, [metrics.clone()]).stage("write")?;
    if let Some(r) = &cfg.results {
        append_table(r, &metrics_header, [metrics]).stage("write")?;
    }
    let summary = format!(
        "reduce method={} rows={} k={} n_far={} t={} purity={:.4} matched_purity={:.4}",
        render(&cfg.method),
        ds.len(),
        cfg.k,
        cfg.n_far,
        cfg.t,
        reported,
        matched
    );
    write_summary(cfg, &summary).stage("write")?;
    log::info!("reduce finished in {:.2?}", started.elapsed());
    Ok(ReduceOutcome {
        projection: p,
        embedding: y,
        assignments: clusters.assignments,
        purity: majority,
        matched_purity: matched,
        summary,
    })
}

/// Layer sizes `[d, hidden..., C]`.
fn network(cfg: &RunConfig, d: usize, classes: usize) -> Result<Mlp> {
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(classes);
    Ok(Mlp::init(&sizes, cfg.placement, cfg.seed)?)
}

/// Data after splitting, shared by every cell of a sweep.
pub struct Prepared {
    pub split: SemiSplit,
    pub test: Option<Dataset>,
    pub pool: Matrix,
}

pub fn prepare_training(cfg: &RunConfig) -> Result<Prepared> {
    let (ds, external) = load_data(cfg).stage("load")?;
    let split = ds.split_semi(cfg.n_labeled, cfg.n_unlabeled, cfg.seed).stage("split")?;
    let test = external.or_else(|| split.test.clone());
    let pool = split.pool_features();
    log::info!(
        "split: {} labeled, {} unlabeled, {} test",
        split.labeled.len(),
        split.unlabeled.len(),
        test.as_ref().map_or(0, Dataset::len)
    );
    Ok(Prepared { split, test, pool })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub net: Mlp,
    pub summary: String,
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    prepare_out(cfg).stage("output")?;
    let data = prepare_training(cfg)?;
    let g = graph_for(cfg, &data.pool).stage("graph")?;
    train_prepared(cfg, &data, &g)
}

fn train_prepared(cfg: &RunConfig, data: &Prepared, g: &NeighborGraph) -> Result<TrainOutcome> {
    let started = Instant::now();
    let tc = cfg.train_config();
    let net = network(cfg, data.pool.cols(), data.split.labeled.class_count()).stage("init")?;
    let inputs = TrainInputs {
        labeled: &data.split.labeled,
        unlabeled: &data.split.unlabeled.features,
        test: data.test.as_ref(),
    };
    let (net, report) = trainer::train(&tc, inputs, g, net).stage("train")?;
    let elapsed = started.elapsed();

    let out = &cfg.out;
    checkpoint::save(&out.join("model.ckpt"), &net).stage("write")?;
    let rows = (0..report.sup_loss.len()).map(|i| {
        vec![
            i.to_string(),
            fmt(report.sup_loss[i]),
            fmt(report.unsup_loss[i]),
            fmt(report.combined[i]),
        ]
    });
    write_table(
        &out.join("train_report.csv"),
        &["iteration", "sup_loss", "unsup_loss", "combined"],
        rows,
    )
    .stage("write")?;
    let acc = report.test_accuracy;
    let metrics_header = [
        "command",
        "regularizer",
        "placement",
        "lambda",
        "t",
        "k",
        "n_far",
        "n_labeled",
        "n_unlabeled",
        "iterations",
        "seed",
        "test_accuracy",
    ];
    let metrics = vec![
        "train".to_string(),
        render(&cfg.regularizer),
        render(&cfg.placement),
        fmt(cfg.lambda),
        fmt(cfg.t),
        cfg.k.to_string(),
        cfg.n_far.to_string(),
        data.split.labeled.len().to_string(),
        data.split.unlabeled.len().to_string(),
        report.sup_loss.len().to_string(),
        cfg.seed.to_string(),
        acc.map(fmt).unwrap_or_default(),
    ];
    write_table(&out.join("metrics.csv"), &metrics_header, [metrics.clone()]).stage("write")?;
    if let Some(r) = &cfg.results {
        append_table(r, &metrics_header, [metrics]).stage("write")?;
    }
    let summary = format!(
        "train regularizer={} placement={} lambda={} t={} iterations={} final_sup_loss={:.6} test_accuracy={}",
        render(&cfg.regularizer),
        render(&cfg.placement),
        cfg.lambda,
        cfg.t,
        report.sup_loss.len(),
        report.sup_loss.last().copied().unwrap_or(f64::NAN),
        acc.map_or("none".into(), |a| format!("{a:.4}"))
    );
    write_summary(cfg, &summary).stage("write")?;
    log::info!("training took {elapsed:.2?}");
    Ok(TrainOutcome { report, net, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub lambda: f64,
    pub t: f64,
    pub outcome: std::result::Result<Option<f64>, String>,
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepCell>> {
    if cfg.sweep_lambda.is_empty() && cfg.sweep_t.is_empty() {
        return Err(Error::Config("empty grid: set sweep_lambda and/or sweep_t".into()));
    }
    prepare_out(cfg).stage("output")?;
    let lambdas = if cfg.sweep_lambda.is_empty() {
        vec![cfg.lambda]
    } else {
        cfg.sweep_lambda.clone()
    };
    let widths = if cfg.sweep_t.is_empty() {
        vec![cfg.t]
    } else {
        cfg.sweep_t.clone()
    };
    let data = prepare_training(cfg)?;

    // neighbor sets do not depend on t: build once, reweight per width
    let base = graph_for(cfg, &data.pool).stage("graph")?;
    let graphs: Vec<std::result::Result<NeighborGraph, String>> = widths
        .iter()
        .map(|&t| base.reweight(&data.pool, t).map_err(|e| e.to_string()))
        .collect();

    let cells: Vec<(usize, f64, usize)> = widths
        .iter()
        .enumerate()
        .flat_map(|(ti, _)| lambdas.iter().map(move |&l| (ti, l)))
        .enumerate()
        .map(|(i, (ti, l))| (i, l, ti))
        .collect();
    let mut results: Vec<SweepCell> = cells
        .par_iter()
        .map(|&(index, lambda, ti)| {
            let t = widths[ti];
            let mut cell_cfg = cfg.clone();
            cell_cfg.lambda = lambda;
            cell_cfg.t = t;
            cell_cfg.sweep_lambda.clear();
            cell_cfg.sweep_t.clear();
            cell_cfg.results = None;
            cell_cfg.out = cfg.out.join(format!("cell_{index:03}"));
            let outcome = graphs[ti].clone().and_then(|g| {
                prepare_out(&cell_cfg)
                    .and_then(|_| train_prepared(&cell_cfg, &data, &g))
                    .map(|o| o.report.test_accuracy)
                    .map_err(|e| e.to_string())
            });
            if let Err(e) = &outcome {
                log::error!("cell {index} (lambda={lambda}, t={t}) failed: {e}");
            }
            SweepCell {
                index,
                lambda,
                t,
                outcome,
            }
        })
        .collect();

    // best accuracy first; failures last; ties keep grid order
    let key = |c: &SweepCell| match &c.outcome {
        Ok(Some(a)) => *a,
        Ok(None) => f64::NEG_INFINITY,
        Err(_) => f64::NAN,
    };
    results.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        match (ka.is_nan(), kb.is_nan()) {
            (false, false) => kb.total_cmp(&ka),
            (a_nan, b_nan) => a_nan.cmp(&b_nan),
        }
        .then(a.index.cmp(&b.index))
    });
    let best = results.iter().position(|c| matches!(c.outcome, Ok(Some(_))));
    let rows = results.iter().enumerate().map(|(rank, c)| {
        let (status, acc, err) = match &c.outcome {
            Ok(a) => ("ok", a.map(fmt).unwrap_or_default(), String::new()),
            Err(e) => ("error", String::new(), e.clone()),
        };
        vec![
            format!("cell_{:03}", c.index),
            fmt(c.lambda),
            fmt(c.t),
            status.to_string(),
            acc,
            u8::from(best == Some(rank)).to_string(),
            err,
        ]
    });
    write_table(
        &cfg.out.join("results.csv"),
        &["cell", "lambda", "t", "status", "test_accuracy", "best", "error"],
        rows,
    )
    .stage("write")?;
    let summary = match best.map(|b| &results[b]) {
        Some(c) => format!(
            "sweep cells={} best=cell_{:03} lambda={} t={} test_accuracy={:.4}",
            results.len(),
            c.index,
            c.lambda,
            c.t,
            key(c)
        ),
        None => format!("sweep cells={} best=none", results.len()),
    };
    write_summary(cfg, &summary).stage("write")?;
    Ok(results)
}

/// Embeds every row with a checkpoint (network embedding and prediction) or a
/// saved projection basis.
pub fn export(cfg: &RunConfig) -> Result<PathBuf> {
    prepare_out(cfg).stage("output")?;
    let (ds, _) = load_data(cfg).stage("load")?;
    let labels = ds.labels();
    let label_col = |i: usize| labels.map_or(String::new(), |l| l[i].to_string());
    let path = cfg.out.join("embedding.csv");
    match (&cfg.model, &cfg.basis) {
        (Some(model), None) => {
            let net = checkpoint::load(model).stage("load model")?;
            let fp = net.forward(ds.features()).stage("embed")?;
            let pred: Vec<usize> = fp.logits.row_iter().map(trainer::argmax).collect();
            let r = fp.embedding.cols();
            let header: Vec<String> = (0..r)
                .map(|c| format!("g{c}"))
                .chain(["pred".into(), "label".into()])
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = fp.embedding.row_iter().enumerate().map(|(i, row)| {
                let mut v: Vec<String> = row.iter().copied().map(fmt).collect();
                v.push(pred[i].to_string());
                v.push(label_col(i));
                v
            });
            write_table(&path, &header, rows).stage("write")?;
            if let Some(l) = labels {
                let acc = accuracy(&pred, l).stage("metrics")?;
                write_summary(
                    cfg,
                    &format!("export model={} rows={} accuracy={acc:.4}", model.display(), ds.len()),
                )
                .stage("write")?;
            }
        }
        (None, Some(basis)) => {
            let b = read_matrix(basis).stage("load basis")?;
            let p = LinearProjection {
                eigenvalues: vec![f64::NAN; b.cols()],
                basis: b,
            };
            let y = udp::project(ds.features(), &p).stage("project")?;
            let header: Vec<String> = (0..y.cols()).map(|c| format!("y{c}")).chain(["label".into()]).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = y.row_iter().enumerate().map(|(i, row)| {
                let mut v: Vec<String> = row.iter().copied().map(fmt).collect();
                v.push(label_col(i));
                v
            });
            write_table(&path, &header, rows).stage("write")?;
        }
        _ => return Err(Error::Config("export needs exactly one of model or basis".into())),
    }
    Ok(path)
}
