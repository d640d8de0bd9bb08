//! Semi-supervised training: supervised steps on labeled batches alternate
//! with unsupervised steps on anchor/neighbor/distant tuples drawn from a
//! precomputed [`NeighborGraph`].
//!
//! The unsupervised loss of one step is the mean over its anchors of either
//! the UDP ratio or the Laplacian term, and it enters the gradient weighted by
//! `lambda`. With `lambda == 0` or [`Regularizer::None`] the unsupervised
//! step is skipped entirely and consumes no randomness.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{bail_arg, Error, Result};
use crate::eval::accuracy;
use crate::graph::NeighborGraph;
use crate::matrix::{sq_dist, Matrix};
use crate::nn::{
    adam_step, laplacian_loss_rows, ratio_loss_rows, softmax_ce, AdamConfig, AdamState, GradientSet, Mlp, Placement,
};
use crate::rng::{streams, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regularizer {
    Udp,
    Laplacian,
    None,
}

impl Regularizer {
    pub fn name(self) -> &'static str {
        match self {
            Regularizer::Udp => "udp",
            Regularizer::Laplacian => "laplacian",
            Regularizer::None => "none",
        }
    }
}

impl core::str::FromStr for Regularizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "udp" => Ok(Regularizer::Udp),
            "laplacian" | "mr" => Ok(Regularizer::Laplacian),
            "none" | "sdl" => Ok(Regularizer::None),
            _ => Err(Error::Argument(format!("unknown regularizer '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepMode {
    /// A supervised Adam step, then a separate unsupervised Adam step.
    Alternating,
    /// One Adam step on the summed gradients.
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Kernel width the graph was built with.
    pub t: f64,
    pub k: usize,
    pub n_far: usize,
    pub lambda: f64,
    pub placement: Placement,
    pub regularizer: Regularizer,
    pub labeled_batch: usize,
    pub anchors_per_step: usize,
    pub neighbor_samples: usize,
    pub distant_samples: usize,
    pub epochs: usize,
    /// Overrides the epoch-derived iteration count.
    pub iterations: Option<usize>,
    pub adam: AdamConfig,
    pub step_mode: StepMode,
    /// Guards the ratio denominator.
    pub ratio_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t: 4.0,
            k: 10,
            n_far: 50,
            lambda: 0.5,
            placement: Placement::Output,
            regularizer: Regularizer::Udp,
            labeled_batch: 10,
            anchors_per_step: 16,
            neighbor_samples: 10,
            distant_samples: 10,
            epochs: 30,
            iterations: None,
            adam: AdamConfig::default(),
            step_mode: StepMode::Alternating,
            ratio_eps: 1e-12,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults tied to the graph: `neighbor_samples = k`,
    /// `distant_samples = min(n_far, 10)`.
    pub fn for_graph(k: usize, n_far: usize, t: f64) -> Self {
        Self {
            t,
            k,
            n_far,
            neighbor_samples: k,
            distant_samples: n_far.min(10),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail_arg!("lambda must be finite and >= 0, got {}", self.lambda);
        }
        for (name, v) in [
            ("labeled_batch", self.labeled_batch),
            ("anchors_per_step", self.anchors_per_step),
            ("neighbor_samples", self.neighbor_samples),
            ("distant_samples", self.distant_samples),
            ("k", self.k),
            ("n_far", self.n_far),
        ] {
            if v == 0 {
                bail_arg!("{} must be at least 1", name);
            }
        }
        if self.neighbor_samples > self.k {
            bail_arg!("neighbor_samples {} exceeds k {}", self.neighbor_samples, self.k);
        }
        if self.distant_samples > self.n_far {
            bail_arg!("distant_samples {} exceeds n_far {}", self.distant_samples, self.n_far);
        }
        if self.iterations == Some(0) || (self.iterations.is_none() && self.epochs == 0) {
            bail_arg!("iteration budget must be positive");
        }
        if !(self.ratio_eps >= 0.0) {
            bail_arg!("ratio_eps must be >= 0");
        }
        Ok(())
    }

    /// `ceil(epochs · L / labeled_batch)` unless overridden.
    pub fn iteration_budget(&self, n_labeled: usize) -> usize {
        self.iterations
            .unwrap_or_else(|| (self.epochs * n_labeled).div_ceil(self.labeled_batch))
    }

    fn unsupervised_active(&self) -> bool {
        self.regularizer != Regularizer::None && self.lambda > 0.0
    }
}

/// What the trainer may see. The unlabeled part is features only.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Matrix,
    pub test: Option<&'a Dataset>,
}

impl<'a> TrainInputs<'a> {
    pub fn from_split(split: &'a crate::dataset::SemiSplit) -> Self {
        Self {
            labeled: &split.labeled,
            unlabeled: &split.unlabeled.features,
            test: split.test.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub sup_loss: Vec<f64>,
    /// Mean unsupervised loss per anchor; 0 when the step was skipped.
    pub unsup_loss: Vec<f64>,
    /// `sup_loss + lambda · unsup_loss`.
    pub combined: Vec<f64>,
    pub test_accuracy: Option<f64>,
    pub config: TrainConfig,
}

/// One anchor with its sampled neighbor and distant rows (pool indices).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTuple {
    pub anchor: usize,
    pub near: Vec<(usize, f64)>,
    pub far: Vec<(usize, f64)>,
}

/// Per-iteration sampling record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Indices into the labeled set.
    pub batch: Vec<usize>,
    pub anchors: Vec<AnchorTuple>,
}

pub fn train(cfg: &TrainConfig, data: TrainInputs<'_>, graph: &NeighborGraph, net: Mlp) -> Result<(Mlp, TrainReport)> {
    let (net, report, _) = run(cfg, data, graph, net, false)?;
    Ok((net, report))
}

/// [`train`] that also returns what was sampled at every iteration.
pub fn train_traced(
    cfg: &TrainConfig,
    data: TrainInputs<'_>,
    graph: &NeighborGraph,
    net: Mlp,
) -> Result<(Mlp, TrainReport, Vec<IterationTrace>)> {
    run(cfg, data, graph, net, true)
}

/// Labeled rows followed by unlabeled rows.
pub fn pool_matrix(data: &TrainInputs<'_>) -> Result<Matrix> {
    if data.unlabeled.rows() == 0 {
        return Ok(data.labeled.features().clone());
    }
    data.labeled.features().vstack(data.unlabeled)
}

fn check_graph_alignment(pool: &Matrix, graph: &NeighborGraph) -> Result<()> {
    if graph.len() != pool.rows() {
        return Err(Error::Consistency(format!(
            "graph has {} rows, labeled + unlabeled pool has {}",
            graph.len(),
            pool.rows()
        )));
    }
    // stored weights must be reproducible from the pool rows
    let m = pool.rows();
    for i in [0, m / 2, m - 1] {
        for &(j, h) in graph.near(i) {
            let expect = libm::exp(-sq_dist(pool.row(i), pool.row(j)) / graph.t());
            if (expect - h).abs() > 1e-9 * expect.max(1e-300) {
                return Err(Error::Consistency(format!(
                    "graph weight H({i},{j}) does not match the pool rows; \
                     build the graph over labeled rows followed by unlabeled rows"
                )));
            }
        }
    }
    Ok(())
}

fn run(
    cfg: &TrainConfig,
    data: TrainInputs<'_>,
    graph: &NeighborGraph,
    mut net: Mlp,
    keep_trace: bool,
) -> Result<(Mlp, TrainReport, Vec<IterationTrace>)> {
    cfg.validate()?;
    let labels = data
        .labeled
        .labels()
        .ok_or_else(|| Error::Argument("labeled set has no labels".into()))?;
    let pool = pool_matrix(&data)?;
    if net.input_dim() != pool.cols() {
        bail_arg!(
            "network input {} does not match data dimension {}",
            net.input_dim(),
            pool.cols()
        );
    }
    if net.classes() < data.labeled.class_count() {
        bail_arg!(
            "network has {} outputs for {} classes",
            net.classes(),
            data.labeled.class_count()
        );
    }
    if net.placement() != cfg.placement {
        bail_arg!(
            "network placement {} differs from configured {}",
            net.placement().name(),
            cfg.placement.name()
        );
    }
    check_graph_alignment(&pool, graph)?;

    let n_lab = data.labeled.len();
    let iterations = cfg.iteration_budget(n_lab);
    let mut rng = Stream::new(cfg.seed, streams::TRAIN);
    let mut adam = AdamState::new(&net, cfg.adam);
    let mut report = TrainReport {
        sup_loss: Vec::with_capacity(iterations),
        unsup_loss: Vec::with_capacity(iterations),
        combined: Vec::with_capacity(iterations),
        test_accuracy: None,
        config: cfg.clone(),
    };
    let mut trace = Vec::new();
    let batch_size = cfg.labeled_batch.min(n_lab);

    for it in 0..iterations {
        let batch = rng.sample_indices(n_lab, batch_size);
        let xb = data.labeled.features().select_rows(&batch);
        let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let fp = net.forward(&xb)?;
        let (sup, d_logits) = softmax_ce(&fp.logits, &yb)?;
        let sup_grads = net.backward(&fp.cache, Some(&d_logits), None)?;
        if cfg.step_mode == StepMode::Alternating {
            step(&mut net, &sup_grads, &mut adam, it)?;
        }

        let mut unsup = 0.0;
        let mut anchors = Vec::new();
        if cfg.unsupervised_active() {
            anchors = sample_anchors(cfg, graph, &mut rng);
            let (loss, grads) = unsupervised_gradients(cfg, &net, &pool, &anchors)?;
            unsup = loss;
            match cfg.step_mode {
                StepMode::Alternating => step(&mut net, &grads, &mut adam, it)?,
                StepMode::Combined => {
                    let mut total = sup_grads;
                    total.add_assign(&grads);
                    step(&mut net, &total, &mut adam, it)?;
                }
            }
        } else if cfg.step_mode == StepMode::Combined {
            step(&mut net, &sup_grads, &mut adam, it)?;
        }

        let combined = sup + cfg.lambda * unsup;
        if !combined.is_finite() {
            return Err(Error::Training {
                iteration: it,
                what: format!("non-finite loss (supervised {sup}, unsupervised {unsup})"),
            });
        }
        report.sup_loss.push(sup);
        report.unsup_loss.push(unsup);
        report.combined.push(combined);
        if keep_trace {
            trace.push(IterationTrace { batch, anchors });
        }
    }

    if let Some(test) = data.test {
        let truth = test
            .labels()
            .ok_or_else(|| Error::Argument("test set has no labels".into()))?;
        report.test_accuracy = Some(accuracy(&predict(&net, test.features())?, truth)?);
    }
    Ok((net, report, trace))
}

fn step(net: &mut Mlp, grads: &GradientSet, adam: &mut AdamState, it: usize) -> Result<()> {
    adam_step(net, grads, adam).map_err(|e| match e {
        Error::Training { what, .. } => Error::Training { iteration: it, what },
        other => other,
    })
}

fn sample_anchors(cfg: &TrainConfig, graph: &NeighborGraph, rng: &mut Stream) -> Vec<AnchorTuple> {
    let m = graph.len();
    let n = cfg.anchors_per_step.min(m);
    rng.sample_indices(m, n)
        .into_iter()
        .map(|i| {
            let near = graph.near(i);
            let far = graph.far(i);
            AnchorTuple {
                anchor: i,
                near: rng.choose_k(near, cfg.neighbor_samples.min(near.len())),
                far: if cfg.regularizer == Regularizer::Udp {
                    rng.choose_k(far, cfg.distant_samples.min(far.len()))
                } else {
                    Vec::new()
                },
            }
        })
        .collect()
}

/// Mean per-anchor unsupervised loss and the gradient of
/// `lambda · mean` with respect to the network parameters.
pub fn unsupervised_gradients(
    cfg: &TrainConfig,
    net: &Mlp,
    pool: &Matrix,
    anchors: &[AnchorTuple],
) -> Result<(f64, GradientSet)> {
    // forward each distinct pool row once
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    for a in anchors {
        for r in core::iter::once(a.anchor)
            .chain(a.near.iter().map(|p| p.0))
            .chain(a.far.iter().map(|p| p.0))
        {
            let next = slot.len();
            slot.entry(r).or_insert(next);
        }
    }
    let mut rows = alloc::vec![0usize; slot.len()];
    for (&r, &s) in &slot {
        rows[s] = r;
    }
    let x = pool.select_rows(&rows);
    let fp = net.forward(&x)?;
    let g = &fp.embedding;
    let mut d_g = Matrix::zeros(g.rows(), g.cols());
    let scale = cfg.lambda / anchors.len() as f64;
    let local = |set: &[(usize, f64)]| -> Vec<(usize, f64)> { set.iter().map(|&(r, w)| (slot[&r], w)).collect() };
    let mut total = 0.0;
    for a in anchors {
        let i = slot[&a.anchor];
        total += match cfg.regularizer {
            Regularizer::Udp => ratio_loss_rows(g, i, &local(&a.near), &local(&a.far), cfg.ratio_eps, scale, &mut d_g)?,
            Regularizer::Laplacian => laplacian_loss_rows(g, i, &local(&a.near), scale, &mut d_g)?,
            Regularizer::None => 0.0,
        };
    }
    let grads = net.backward(&fp.cache, None, Some(&d_g))?;
    Ok((total / anchors.len() as f64, grads))
}

/// Argmax of the logits per row; ties go to the lowest class id.
pub fn predict(net: &Mlp, x: &Matrix) -> Result<Vec<usize>> {
    let logits = net.logits(x)?;
    Ok(logits.row_iter().map(argmax).collect())
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}
