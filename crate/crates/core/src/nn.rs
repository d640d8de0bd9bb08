//! Feedforward network with hand-written backpropagation, the supervised and
//! unsupervised losses, and Adam.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail_arg, Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::{streams, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Identity,
    /// Final classification layer only. The forward pass returns the
    /// pre-softmax logits; the softmax lives in [`softmax_ce`].
    Softmax,
}

impl Activation {
    fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Relu => {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                a
            }
            Activation::Identity | Activation::Softmax => z.clone(),
        }
    }

    /// Multiplies `grad` by the activation derivative at `z`.
    fn backprop(self, z: &Matrix, grad: &mut Matrix) {
        if let Activation::Relu = self {
            for (g, &zv) in grad.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if zv <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

/// Affine map `a ↦ a·W + b` followed by an activation. `weights` is
/// `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Stream) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)).collect();
        Self {
            weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer"),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn affine(&self, a: &Matrix) -> Matrix {
        let mut z = a.matmul(&self.weights).expect("chained dimensions");
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        z
    }
}

/// Where the embedding `g` used by the unsupervised loss is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    /// Pre-softmax output logits.
    Output,
    /// Post-activation output of a hidden layer.
    Middle,
    /// A separate affine head branching off a hidden layer.
    Auxiliary,
}

impl Placement {
    pub fn name(self) -> &'static str {
        match self {
            Placement::Output => "output",
            Placement::Middle => "middle",
            Placement::Auxiliary => "auxiliary",
        }
    }
}

impl core::str::FromStr for Placement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "output" => Ok(Placement::Output),
            "middle" => Ok(Placement::Middle),
            "auxiliary" | "aux" => Ok(Placement::Auxiliary),
            _ => Err(Error::Argument(format!("unknown placement '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    placement: Placement,
    /// Layer whose output is the embedding (or feeds the auxiliary head).
    embed_tap: usize,
    aux_head: Option<Layer>,
}

impl Mlp {
    /// Random network for `sizes = [input, hidden.., classes]` with relu
    /// hidden layers and Glorot-uniform weights. Middle and auxiliary
    /// placements tap hidden layer `(layers - 1) / 2`; the auxiliary head
    /// maps it to `classes` dimensions.
    pub fn init(sizes: &[usize], placement: Placement, seed: u64) -> Result<Self> {
        let classes = sizes.last().copied().unwrap_or(0);
        Self::init_with_aux_dim(sizes, placement, classes, seed)
    }

    pub fn init_with_aux_dim(sizes: &[usize], placement: Placement, aux_dim: usize, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            bail_arg!("layer sizes {:?} need at least two positive entries", sizes);
        }
        let n = sizes.len() - 1;
        if placement != Placement::Output && n < 2 {
            bail_arg!("{} placement needs a hidden layer", placement.name());
        }
        if aux_dim == 0 {
            bail_arg!("auxiliary embedding dimension must be positive");
        }
        let mut rng = Stream::new(seed, streams::INIT);
        let layers: Vec<Layer> = (0..n)
            .map(|l| {
                let act = if l + 1 == n {
                    Activation::Softmax
                } else {
                    Activation::Relu
                };
                Layer::init(sizes[l], sizes[l + 1], act, &mut rng)
            })
            .collect();
        let embed_tap = match placement {
            Placement::Output => n - 1,
            Placement::Middle | Placement::Auxiliary => (n - 1) / 2,
        };
        let aux_head = (placement == Placement::Auxiliary)
            .then(|| Layer::init(sizes[embed_tap + 1], aux_dim, Activation::Identity, &mut rng));
        Ok(Self {
            layers,
            placement,
            embed_tap,
            aux_head,
        })
    }

    /// Reassembles a network from parts (checkpoint loading).
    pub fn from_parts(
        layers: Vec<Layer>,
        placement: Placement,
        embed_tap: usize,
        aux_head: Option<Layer>,
    ) -> Result<Self> {
        if layers.is_empty() {
            bail_arg!("network needs at least one layer");
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                bail_arg!(
                    "layer {} outputs {} but layer {} takes {}",
                    l,
                    pair[0].fan_out(),
                    l + 1,
                    pair[1].fan_in()
                );
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                bail_arg!("layer {} bias length {} != {}", l, layer.bias.len(), layer.fan_out());
            }
            let last = l + 1 == layers.len();
            if (layer.activation == Activation::Softmax) != last {
                bail_arg!("softmax must be the final layer's activation only");
            }
        }
        if embed_tap >= layers.len() {
            bail_arg!("embedding tap {} out of range", embed_tap);
        }
        match (placement, &aux_head) {
            (Placement::Output, None) if embed_tap == layers.len() - 1 => {}
            (Placement::Middle, None) if embed_tap + 1 < layers.len() => {}
            (Placement::Auxiliary, Some(h)) if embed_tap + 1 < layers.len() => {
                if h.fan_in() != layers[embed_tap].fan_out() || h.bias.len() != h.fan_out() {
                    bail_arg!("auxiliary head does not fit layer {}", embed_tap);
                }
                if h.activation == Activation::Softmax {
                    bail_arg!("softmax must be the final layer's activation only");
                }
            }
            _ => bail_arg!("inconsistent {} placement (tap {})", placement.name(), embed_tap),
        }
        Ok(Self {
            layers,
            placement,
            embed_tap,
            aux_head,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn embed_tap(&self) -> usize {
        self.embed_tap
    }

    pub fn aux_head(&self) -> Option<&Layer> {
        self.aux_head.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn embedding_dim(&self) -> usize {
        match &self.aux_head {
            Some(h) => h.fan_out(),
            None => self.layers[self.embed_tap].fan_out(),
        }
    }

    /// Layer sizes `[input, .., classes]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Layer::fan_out));
        s
    }

    pub fn parameter_count(&self) -> usize {
        self.param_slices().iter().map(|(_, s)| s.len()).sum()
    }

    /// Named views of every parameter tensor, in a fixed order shared with
    /// [`GradientSet`] and [`AdamState`].
    pub fn param_slices(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.weight"), layer.weights.as_slice()));
            out.push((format!("layer{l}.bias"), &layer.bias[..]));
        }
        if let Some(h) = &self.aux_head {
            out.push((String::from("aux.weight"), h.weights.as_slice()));
            out.push((String::from("aux.bias"), &h.bias[..]));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in self.layers.iter_mut() {
            out.push(layer.weights.as_mut_slice());
            out.push(&mut layer.bias[..]);
        }
        if let Some(h) = &mut self.aux_head {
            out.push(h.weights.as_mut_slice());
            out.push(&mut h.bias[..]);
        }
        out
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardPass> {
        if batch.cols() != self.input_dim() {
            bail_arg!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            );
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = batch.clone();
        for layer in &self.layers {
            let z = layer.affine(&a);
            let next = layer.activation.apply(&z);
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        let logits = a;
        let embedding = match (&self.aux_head, self.placement) {
            (Some(h), _) => h.affine(self.tap_output(&inputs, &logits)),
            (None, Placement::Output) => logits.clone(),
            (None, _) => self.tap_output(&inputs, &logits).clone(),
        };
        Ok(ForwardPass {
            logits,
            embedding,
            cache: Cache { inputs, pre },
        })
    }

    /// Post-activation output of the tap layer.
    fn tap_output<'a>(&self, inputs: &'a [Matrix], logits: &'a Matrix) -> &'a Matrix {
        inputs.get(self.embed_tap + 1).unwrap_or(logits)
    }

    /// Logits only, for inference.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim() {
            bail_arg!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            );
        }
        let mut a = batch.clone();
        for layer in &self.layers {
            a = layer.activation.apply(&layer.affine(&a));
        }
        Ok(a)
    }

    /// Gradients of a loss whose derivative is `d_logits` with respect to the
    /// logits plus `d_embedding` with respect to the embedding. Either may be
    /// `None` (treated as zero).
    pub fn backward(
        &self,
        cache: &Cache,
        d_logits: Option<&Matrix>,
        d_embedding: Option<&Matrix>,
    ) -> Result<GradientSet> {
        let n = self.layers.len();
        let batch = cache.inputs[0].rows();
        let check = |m: &Matrix, cols: usize, what: &str| -> Result<()> {
            if m.rows() != batch || m.cols() != cols {
                return Err(Error::Consistency(format!(
                    "{what} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    batch,
                    cols
                )));
            }
            Ok(())
        };
        if let Some(d) = d_logits {
            check(d, self.classes(), "logit gradient")?;
        }
        if let Some(d) = d_embedding {
            check(d, self.embedding_dim(), "embedding gradient")?;
        }

        let mut grads = GradientSet::zeros_like(self);
        let mut d_z = match d_logits {
            Some(d) => d.clone(),
            None => Matrix::zeros(batch, self.classes()),
        };
        if let (Placement::Output, Some(de)) = (self.placement, d_embedding) {
            d_z.add_assign(de);
        }
        // gradient reaching the tap layer's output from the side branch
        let side: Option<Matrix> = match (self.placement, d_embedding) {
            (Placement::Middle, Some(de)) => Some(de.clone()),
            (Placement::Auxiliary, Some(de)) => {
                let head = self.aux_head.as_ref().expect("auxiliary placement has a head");
                let tap_out = self.tap_output(&cache.inputs, &cache.inputs[0]);
                let (gw, gb) = grads.aux.as_mut().expect("auxiliary gradients");
                accumulate_affine_grads(tap_out, de, gw, gb);
                Some(back_through_weights(de, &head.weights))
            }
            _ => None,
        };

        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let (gw, gb) = &mut grads.layers[l];
            accumulate_affine_grads(&cache.inputs[l], &d_z, gw, gb);
            if l == 0 {
                break;
            }
            let mut d_a = back_through_weights(&d_z, &layer.weights);
            if l - 1 == self.embed_tap {
                if let Some(s) = &side {
                    d_a.add_assign(s);
                }
            }
            self.layers[l - 1].activation.backprop(&cache.pre[l - 1], &mut d_a);
            d_z = d_a;
        }
        Ok(grads)
    }
}

/// `gW += aᵀ dZ`, `gb += colsum(dZ)`.
fn accumulate_affine_grads(a: &Matrix, d_z: &Matrix, gw: &mut Matrix, gb: &mut [f64]) {
    for r in 0..a.rows() {
        let dz = d_z.row(r);
        for (i, &ai) in a.row(r).iter().enumerate() {
            if ai != 0.0 {
                axpy(ai, dz, gw.row_mut(i));
            }
        }
        for (b, &g) in gb.iter_mut().zip(dz) {
            *b += g;
        }
    }
}

/// `dZ Wᵀ`.
fn back_through_weights(d_z: &Matrix, w: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(d_z.rows(), w.rows());
    for r in 0..d_z.rows() {
        let dz = d_z.row(r);
        let o = out.row_mut(r);
        for (i, oi) in o.iter_mut().enumerate() {
            *oi = dot(w.row(i), dz);
        }
    }
    out
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer; `inputs[0]` is the batch.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Matrix,
    pub embedding: Matrix,
    pub cache: Cache,
}

/// One gradient buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub aux: Option<(Matrix, Vec<f64>)>,
}

impl GradientSet {
    pub fn zeros_like(m: &Mlp) -> Self {
        let z = |l: &Layer| (Matrix::zeros(l.fan_in(), l.fan_out()), vec![0.0; l.fan_out()]);
        Self {
            layers: m.layers.iter().map(z).collect(),
            aux: m.aux_head.as_ref().map(z),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.layers.iter().chain(self.aux.iter()) {
            out.push(w.as_slice());
            out.push(b);
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.layers.iter_mut().chain(self.aux.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(&mut b[..]);
        }
        out
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&x| x == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot) / batch` with respect to the logits.
pub fn softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b || b == 0 {
        bail_arg!("{} labels for a batch of {}", labels.len(), b);
    }
    let mut grad = Matrix::zeros(b, c);
    let mut loss = 0.0;
    for r in 0..b {
        let y = labels[r];
        if y >= c {
            bail_arg!("label {} out of range for {} classes", y, c);
        }
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&v| libm::exp(v - max)).sum();
        let lse = max + libm::log(sum);
        loss += lse - z[y];
        let g = grad.row_mut(r);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = libm::exp(z[k] - lse) / b as f64;
        }
        g[y] -= 1.0 / b as f64;
    }
    Ok((loss / b as f64, grad))
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Per-anchor UDP ratio over rows of an embedding matrix:
/// `A / (B + eps)` with `A = Σⱼ Hⱼ‖gᵢ − gⱼ‖²` over `near` and
/// `B = Σ_b W_b‖gᵢ − g_b‖²` over `far`.
///
/// Adds `scale · ∂loss/∂g` into `grad` (same shape as `g`) and returns the
/// unscaled loss.
pub fn ratio_loss_rows(
    g: &Matrix,
    anchor: usize,
    near: &[(usize, f64)],
    far: &[(usize, f64)],
    eps: f64,
    scale: f64,
    grad: &mut Matrix,
) -> Result<f64> {
    if near.is_empty() || far.is_empty() {
        bail_arg!("ratio loss needs at least one neighbor and one distant row");
    }
    let gi = g.row(anchor);
    let weighted =
        |set: &[(usize, f64)]| -> f64 { set.iter().map(|&(j, w)| w * crate::matrix::sq_dist(gi, g.row(j))).sum() };
    let a = weighted(near);
    let b = weighted(far);
    let den = b + eps;
    let loss = a / den;
    // ∂loss = ∂A / den − A ∂B / den²
    let ca = scale / den;
    let cb = -scale * a / (den * den);
    let d = g.cols();
    let mut diff = vec![0.0; d];
    for (set, c) in [(near, ca), (far, cb)] {
        for &(j, w) in set {
            for (k, dk) in diff.iter_mut().enumerate() {
                *dk = 2.0 * w * c * (gi[k] - g[(j, k)]);
            }
            axpy(1.0, &diff, grad.row_mut(anchor));
            axpy(-1.0, &diff, grad.row_mut(j));
        }
    }
    Ok(loss)
}

/// Laplacian smoothness term `Σⱼ Hⱼ‖gᵢ − gⱼ‖²` over rows of `g`; adds
/// `scale · ∂loss/∂g` into `grad`.
pub fn laplacian_loss_rows(
    g: &Matrix,
    anchor: usize,
    near: &[(usize, f64)],
    scale: f64,
    grad: &mut Matrix,
) -> Result<f64> {
    if near.is_empty() {
        bail_arg!("laplacian loss needs at least one neighbor");
    }
    let gi = g.row(anchor);
    let d = g.cols();
    let mut loss = 0.0;
    let mut diff = vec![0.0; d];
    for &(j, w) in near {
        loss += w * crate::matrix::sq_dist(gi, g.row(j));
        for (k, dk) in diff.iter_mut().enumerate() {
            *dk = 2.0 * w * scale * (gi[k] - g[(j, k)]);
        }
        axpy(1.0, &diff, grad.row_mut(anchor));
        axpy(-1.0, &diff, grad.row_mut(j));
    }
    Ok(loss)
}

/// Loss value with gradients for the anchor and for each listed embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseLoss {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_neighbors: Vec<Vec<f64>>,
    pub d_distants: Vec<Vec<f64>>,
}

fn stack_embeddings(anchor: &[f64], near: &[(&[f64], f64)], far: &[(&[f64], f64)]) -> Result<Matrix> {
    let d = anchor.len();
    let mut data = Vec::with_capacity((1 + near.len() + far.len()) * d);
    data.extend_from_slice(anchor);
    for (e, _) in near.iter().chain(far) {
        if e.len() != d {
            bail_arg!("embedding of length {} next to anchor of length {}", e.len(), d);
        }
        data.extend_from_slice(e);
    }
    Matrix::from_vec(1 + near.len() + far.len(), d, data)
}

fn split_grads(grad: &Matrix, n_near: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows: Vec<Vec<f64>> = grad.row_iter().map(<[f64]>::to_vec).collect();
    let mut it = rows.into_iter();
    let anchor = it.next().expect("anchor row");
    let near: Vec<Vec<f64>> = it.by_ref().take(n_near).collect();
    (anchor, near, it.collect())
}

/// UDP ratio `Σⱼ Hⱼ‖gᵢ − gⱼ‖² / (Σ_b W_b‖gᵢ − g_b‖² + eps)` for one anchor,
/// with exact quotient-rule gradients.
pub fn udp_ratio_loss(
    anchor: &[f64],
    neighbors: &[(&[f64], f64)],
    distants: &[(&[f64], f64)],
    eps: f64,
) -> Result<PairwiseLoss> {
    if neighbors.is_empty() || distants.is_empty() {
        bail_arg!("ratio loss needs at least one neighbor and one distant embedding");
    }
    let g = stack_embeddings(anchor, neighbors, distants)?;
    let near: Vec<(usize, f64)> = neighbors.iter().enumerate().map(|(k, &(_, w))| (1 + k, w)).collect();
    let far: Vec<(usize, f64)> = distants
        .iter()
        .enumerate()
        .map(|(k, &(_, w))| (1 + neighbors.len() + k, w))
        .collect();
    let mut grad = Matrix::zeros(g.rows(), g.cols());
    let loss = ratio_loss_rows(&g, 0, &near, &far, eps, 1.0, &mut grad)?;
    let (d_anchor, d_neighbors, d_distants) = split_grads(&grad, neighbors.len());
    Ok(PairwiseLoss {
        loss,
        d_anchor,
        d_neighbors,
        d_distants,
    })
}

/// Laplacian term `Σⱼ Hⱼ‖gᵢ − gⱼ‖²` for one anchor.
pub fn laplacian_loss(anchor: &[f64], neighbors: &[(&[f64], f64)]) -> Result<PairwiseLoss> {
    if neighbors.is_empty() {
        bail_arg!("laplacian loss needs at least one neighbor");
    }
    let g = stack_embeddings(anchor, neighbors, &[])?;
    let near: Vec<(usize, f64)> = neighbors.iter().enumerate().map(|(k, &(_, w))| (1 + k, w)).collect();
    let mut grad = Matrix::zeros(g.rows(), g.cols());
    let loss = laplacian_loss_rows(&g, 0, &near, 1.0, &mut grad)?;
    let (d_anchor, d_neighbors, _) = split_grads(&grad, neighbors.len());
    Ok(PairwiseLoss {
        loss,
        d_anchor,
        d_neighbors,
        d_distants: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to every gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(m: &Mlp, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = m.param_slices().iter().map(|(_, s)| s.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(m: &mut Mlp, grads: &GradientSet, st: &mut AdamState) -> Result<()> {
    let names: Vec<String> = m.param_slices().into_iter().map(|(n, _)| n).collect();
    let g = grads.slices();
    if g.len() != names.len() || g.len() != st.first.len() {
        return Err(Error::Consistency(String::from("gradient set does not match network")));
    }
    for (k, gs) in g.iter().enumerate() {
        if gs.len() != st.first[k].len() {
            return Err(Error::Consistency(format!(
                "gradient for {} has wrong length",
                names[k]
            )));
        }
        if gs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Training {
                iteration: st.step as usize,
                what: format!("non-finite gradient in {}", names[k]),
            });
        }
    }
    st.step += 1;
    let c = st.config;
    let t = st.step as f64;
    let bc1 = 1.0 - libm::pow(c.beta1, t);
    let bc2 = 1.0 - libm::pow(c.beta2, t);
    for (k, p) in m.param_slices_mut().into_iter().enumerate() {
        let (mk, vk) = (&mut st.first[k], &mut st.second[k]);
        for (i, theta) in p.iter_mut().enumerate() {
            let gi = g[k][i] + c.weight_decay * *theta;
            mk[i] = c.beta1 * mk[i] + (1.0 - c.beta1) * gi;
            vk[i] = c.beta2 * vk[i] + (1.0 - c.beta2) * gi * gi;
            let mh = mk[i] / bc1;
            let vh = vk[i] / bc2;
            *theta -= c.lr * mh / (libm::sqrt(vh) + c.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_net(sizes: &[usize]) -> Mlp {
        let mut m = Mlp::init(sizes, Placement::Output, 0).unwrap();
        for l in m.layers.iter_mut() {
            l.weights.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        }
        m
    }

    #[test]
    fn init_shapes_and_determinism() {
        let m = Mlp::init(&[784, 128, 64, 10], Placement::Output, 1).unwrap();
        assert_eq!(m.embed_tap(), 2);
        assert_eq!(m.embedding_dim(), 10);
        assert_eq!(m, Mlp::init(&[784, 128, 64, 10], Placement::Output, 1).unwrap());
        let mid = Mlp::init(&[784, 128, 64, 10], Placement::Middle, 1).unwrap();
        assert_eq!(mid.embed_tap(), 1);
        assert_eq!(mid.embedding_dim(), 64);
        let aux = Mlp::init(&[784, 128, 64, 10], Placement::Auxiliary, 1).unwrap();
        assert!(aux.aux_head().is_some());
        assert_eq!(aux.layers(), m.layers());
        assert!(Mlp::init(&[5], Placement::Output, 0).is_err());
        assert!(Mlp::init(&[5, 2], Placement::Middle, 0).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let m = Mlp::init(&[30, 20, 5], Placement::Output, 2).unwrap();
        let lim = (6.0f64 / 50.0).sqrt();
        assert!(m.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= lim));
    }

    #[test]
    fn zero_network_gives_uniform_softmax() {
        let m = zero_net(&[3, 4, 10]);
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let fp = m.forward(&x).unwrap();
        assert!(fp.logits.as_slice().iter().all(|&v| v == 0.0));
        let p = softmax(&fp.logits);
        assert!(p.as_slice().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let (loss, _) = softmax_ce(&fp.logits, &[3]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identity_layer_embedding_is_input() {
        let layer = Layer {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Softmax,
        };
        let m = Mlp::from_parts(vec![layer], Placement::Output, 0, None).unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap().embedding, x);
        assert!(m.forward(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn confident_correct_logit_has_vanishing_loss() {
        let z = Matrix::from_rows(&[[0.0, 800.0, 0.0]]).unwrap();
        let (loss, g) = softmax_ce(&z, &[1]).unwrap();
        assert!(loss < 1e-12);
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = Mlp::init(&[4, 3, 2], Placement::Auxiliary, 5).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let fp = m.forward(&x).unwrap();
        let g = m
            .backward(&fp.cache, Some(&Matrix::zeros(1, 2)), Some(&Matrix::zeros(1, 2)))
            .unwrap();
        assert!(g.is_zero());
        assert!(m.backward(&fp.cache, Some(&Matrix::zeros(2, 2)), None).is_err());
    }

    #[test]
    fn laplacian_hand_case() {
        let r = laplacian_loss(&[1.0, 0.0], &[(&[0.0, 0.0], 1.0)]).unwrap();
        assert_eq!(r.loss, 1.0);
        assert_eq!(r.d_anchor, vec![2.0, 0.0]);
        assert_eq!(r.d_neighbors[0], vec![-2.0, 0.0]);
        assert!(laplacian_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn ratio_vanishes_for_identical_embeddings() {
        let e = [0.5, 0.5];
        let r = udp_ratio_loss(&e, &[(&e, 0.3)], &[(&e, 0.2)], 1e-12).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(udp_ratio_loss(&e, &[], &[(&e, 1.0)], 0.0).is_err());
        assert!(udp_ratio_loss(&e, &[(&e, 1.0)], &[], 0.0).is_err());
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let layer = Layer {
            weights: Matrix::from_rows(&[[0.5]]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Softmax,
        };
        let mut m = Mlp::from_parts(vec![layer], Placement::Output, 0, None).unwrap();
        let mut st = AdamState::new(&m, AdamConfig::default());
        let mut g = GradientSet::zeros_like(&m);
        g.layers[0].0[(0, 0)] = 1.0;
        adam_step(&mut m, &g, &mut st).unwrap();
        let w = m.layers()[0].weights[(0, 0)];
        assert!((w - (0.5 - 1e-3)).abs() < 1e-10);
        assert_eq!(m.layers()[0].bias[0], 0.0);
        assert_eq!(st.step, 1);

        let before = m.clone();
        let m1 = st.first_moments()[0][0];
        let zero = GradientSet::zeros_like(&m);
        adam_step(&mut m, &zero, &mut st).unwrap();
        // zero gradient still moves through momentum; moments decay
        assert!((st.first_moments()[0][0] - 0.9 * m1).abs() < 1e-15);
        assert_eq!(before.layers()[0].bias, m.layers()[0].bias);
    }

    #[test]
    fn adam_fresh_zero_gradient_is_a_no_op() {
        let mut m = Mlp::init(&[3, 4, 2], Placement::Middle, 9).unwrap();
        let before = m.clone();
        let mut st = AdamState::new(&m, AdamConfig::default());
        let zero = GradientSet::zeros_like(&m);
        adam_step(&mut m, &zero, &mut st).unwrap();
        assert_eq!(before, m);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut m = Mlp::init(&[2, 2], Placement::Output, 0).unwrap();
        let mut st = AdamState::new(&m, AdamConfig::default());
        let mut g = GradientSet::zeros_like(&m);
        g.layers[0].1[1] = f64::NAN;
        match adam_step(&mut m, &g, &mut st) {
            Err(Error::Training { what, .. }) => assert!(what.contains("layer0.bias")),
            other => panic!("{other:?}"),
        }
    }
}
