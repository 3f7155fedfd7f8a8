//! Fully connected ReLU network with hand-written backpropagation, softmax
//! cross-entropy, Adam and the optional configuration-entropy penalty.
//!
//! The layer widths are a parameter so the same code drives LeNet300
//! (784-300-100-10) and the tiny analogs used for gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{epoch_seed, minibatches, MnistSplit, NUM_CLASSES};
use crate::entropy::{config_entropy_with_grad, total_sparsity_loss};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Matrix};

pub const LENET300_SIZES: [usize; 4] = [784, 300, 100, 10];

/// Total number of weight-matrix entries in LeNet300.
pub const LENET300_WEIGHT_COUNT: usize = 784 * 300 + 300 * 100 + 100 * 10;

/// One affine layer: `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

/// Parameters of a multilayer perceptron. Gradients and Adam moments reuse
/// the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// The 784-300-100-10 network.
pub type Lenet300Params = MlpParams;

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output width");
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Same-shaped zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn weights(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| &l.weight)
    }

    pub fn weight_count(&self) -> usize {
        self.weights().map(Matrix::len).sum()
    }

    /// Number of nonzero weight-matrix entries.
    pub fn nonzero_weights(&self) -> usize {
        self.weights()
            .map(|w| w.as_slice().iter().filter(|&&v| v != 0.0).count())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Multiplies every weight matrix (not the biases) by `alpha`.
    pub fn scale_weights(&mut self, alpha: f64) {
        for l in &mut self.layers {
            l.weight = l.weight.scale(alpha);
        }
    }

    fn for_each_pair(&mut self, other: &MlpParams, mut f: impl FnMut(&mut f64, f64)) {
        assert_eq!(self.sizes(), other.sizes(), "parameter layouts differ");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                f(x, y);
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                f(x, y);
            }
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &MlpParams) {
        self.for_each_pair(other, |x, y| *x += alpha * y);
    }

    /// All parameters flattened layer by layer (weight then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn param_slot(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weight.len() {
                return &mut l.weight.as_mut_slice()[index];
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
pub fn init_params(sizes: &[usize], seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::zeros(sizes);
    for layer in &mut params.layers {
        let bound = 1.0 / (layer.inputs() as f64).sqrt();
        for w in layer.weight.as_mut_slice() {
            *w = rng.gen_range(-bound..=bound);
        }
    }
    params
}

pub fn init_lenet300(seed: u64) -> Lenet300Params {
    init_params(&LENET300_SIZES, seed)
}

/// Activations kept from the forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself, then post-ReLU activations).
    pub inputs: Vec<Matrix>,
    /// Pre-activation of each layer; the last one is the logits.
    pub pre_activations: Vec<Matrix>,
}

fn affine(x: &Matrix, layer: &Layer) -> Matrix {
    let mut z = matmul_nt(x, &layer.weight);
    for i in 0..z.rows() {
        for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    z
}

/// Logits for a batch (one sample per row) and the cache for backprop.
pub fn forward(params: &MlpParams, batch: &Matrix) -> (Matrix, ForwardCache) {
    let n = params.layers.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre_activations = Vec::with_capacity(n);
    let mut x = batch.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        let z = affine(&x, layer);
        inputs.push(x);
        x = if k + 1 < n { z.map(|v| v.max(0.0)) } else { z.clone() };
        pre_activations.push(z);
    }
    (
        x,
        ForwardCache {
            inputs,
            pre_activations,
        },
    )
}

/// Logits only, no cache.
pub fn logits(params: &MlpParams, batch: &Matrix) -> Matrix {
    let n = params.layers.len();
    let mut x = affine(batch, &params.layers[0]);
    for layer in &params.layers[1..n] {
        x = affine(&x.map(|v| v.max(0.0)), layer);
    }
    x
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[u8]) -> (f64, Matrix) {
    assert_eq!(logits.rows(), labels.len(), "one label per row");
    let b = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_denom = denom.ln();
        loss += log_denom - (row[label as usize] - max);
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp() / denom / b;
        }
        g[label as usize] -= 1.0 / b;
    }
    (loss / b, grad)
}

fn backward(params: &MlpParams, cache: &ForwardCache, dlogits: Matrix) -> Gradients {
    let n = params.layers.len();
    let mut grads = params.zeros_like();
    let mut dz = dlogits;
    for k in (0..n).rev() {
        grads.layers[k].weight = matmul_tn(&dz, &cache.inputs[k]);
        let db = &mut grads.layers[k].bias;
        for i in 0..dz.rows() {
            for (acc, v) in db.iter_mut().zip(dz.row(i)) {
                *acc += v;
            }
        }
        if k > 0 {
            let mut dx = matmul(&dz, &params.layers[k].weight);
            let pre = &cache.pre_activations[k - 1];
            for (d, &z) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            dz = dx;
        }
    }
    grads
}

/// Mean cross-entropy over the batch and its exact parameter gradient.
pub fn cross_entropy_and_grads(params: &MlpParams, batch: &Matrix, labels: &[u8]) -> (f64, Gradients) {
    let (out, cache) = forward(params, batch);
    let (loss, dlogits) = softmax_cross_entropy(&out, labels);
    (loss, backward(params, &cache, dlogits))
}

/// The two components of the training loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    /// Penalty as added to the loss (already weighted); zero when disabled.
    pub sparsity: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.cross_entropy + self.sparsity
    }
}

/// Training loss (cross-entropy plus, optionally, the unweighted sum of
/// per-layer configuration entropies) and its gradient. Weight decay is
/// applied by the optimizer, not here.
pub fn loss_and_grads(
    params: &MlpParams,
    batch: &Matrix,
    labels: &[u8],
    use_sparsity_loss: bool,
) -> (LossBreakdown, Gradients) {
    weighted_loss_and_grads(params, batch, labels, if use_sparsity_loss { 1.0 } else { 0.0 })
}

/// As [`loss_and_grads`] with the penalty scaled by `sparsity_weight`.
pub fn weighted_loss_and_grads(
    params: &MlpParams,
    batch: &Matrix,
    labels: &[u8],
    sparsity_weight: f64,
) -> (LossBreakdown, Gradients) {
    let (cross_entropy, mut grads) = cross_entropy_and_grads(params, batch, labels);
    let mut sparsity = 0.0;
    if sparsity_weight != 0.0 {
        for (layer, g) in params.layers.iter().zip(&mut grads.layers) {
            let reg = config_entropy_with_grad(&layer.weight);
            sparsity += sparsity_weight * reg.value;
            g.weight.add_scaled(sparsity_weight, &reg.grad);
        }
    }
    (
        LossBreakdown {
            cross_entropy,
            sparsity,
        },
        grads,
    )
}

/// Optimizer and schedule settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Coupled L2 decay added to the gradient; 0 disables it.
    pub weight_decay: f64,
    pub use_sparsity_loss: bool,
    /// Coefficient on the penalty when it is enabled.
    pub sparsity_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 0.0,
            use_sparsity_loss: false,
            sparsity_weight: 1.0,
            epochs: 25,
            batch_size: 64,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        if !(self.sparsity_weight >= 0.0 && self.sparsity_weight.is_finite()) {
            return Err(Error::InvalidArgument("sparsity_weight must be >= 0".into()));
        }
        if !(1..=60_000).contains(&self.batch_size) {
            return Err(Error::InvalidArgument(
                "batch_size must lie in 1..=60000".into(),
            ));
        }
        Ok(())
    }
}

/// Adam first/second moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &TrainingConfig,
    step_size: f64,
    bias2: f64,
) {
    let (b1, b2, wd) = (cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay);
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        let g = g + wd * *p;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let denom = (*v / bias2).sqrt() + cfg.adam_eps;
        *p -= step_size * *m / denom;
    }
}

/// One Adam step with bias correction; weight decay (if any) is added to
/// the gradient of every parameter, biases included.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState, cfg: &TrainingConfig) {
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);
    let step_size = cfg.learning_rate / bias1;
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let (gl, ml, vl) = (&grads.layers[k], &mut state.m.layers[k], &mut state.v.layers[k]);
        adam_update(
            layer.weight.as_mut_slice(),
            gl.weight.as_slice(),
            ml.weight.as_mut_slice(),
            vl.weight.as_mut_slice(),
            cfg,
            step_size,
            bias2,
        );
        adam_update(&mut layer.bias, &gl.bias, &mut ml.bias, &mut vl.bias, cfg, step_size, bias2);
    }
}

/// Index of the largest logit; ties go to the lowest class.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

const EVAL_CHUNK: usize = 2000;

/// Fraction of rows whose argmax logit equals the label.
pub fn evaluate_accuracy(params: &MlpParams, images: &Matrix, labels: &[u8]) -> f64 {
    assert_eq!(images.rows(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    let mut start = 0;
    while start < labels.len() {
        let end = (start + EVAL_CHUNK).min(labels.len());
        let idx: Vec<usize> = (start..end).collect();
        let out = logits(params, &images.gather_rows(&idx));
        correct += (0..out.rows())
            .filter(|&i| argmax(out.row(i)) == labels[start + i] as usize)
            .count();
        start = end;
    }
    correct as f64 / labels.len() as f64
}

/// Mean cross-entropy over a whole split, computed in chunks.
pub fn mean_cross_entropy(params: &MlpParams, split: &MnistSplit) -> f64 {
    let mut total = 0.0;
    let mut start = 0;
    while start < split.len() {
        let end = (start + EVAL_CHUNK).min(split.len());
        let idx: Vec<usize> = (start..end).collect();
        let out = logits(params, &split.images.gather_rows(&idx));
        let (loss, _) = softmax_cross_entropy(&out, &split.labels[start..end]);
        total += loss * (end - start) as f64;
        start = end;
    }
    total / split.len() as f64
}

/// Per-epoch training record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean over the epoch's minibatches of the optimized loss.
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Sum of configuration entropies of the weights at the end of the epoch.
    pub sparsity_loss: f64,
}

/// Trains a network of the given widths; deterministic for a fixed config.
pub fn train_network(
    sizes: &[usize],
    cfg: &TrainingConfig,
    train: &MnistSplit,
    test: &MnistSplit,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(MlpParams, Vec<EpochMetrics>)> {
    cfg.validate()?;
    assert_eq!(train.images.cols(), sizes[0], "input width mismatch");
    assert!(*sizes.last().unwrap() <= NUM_CLASSES || train.is_empty());
    let mut params = init_params(sizes, cfg.seed);
    let mut state = AdamState::new(&params);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (step, batch) in minibatches(train, cfg.batch_size, epoch_seed(cfg.seed, epoch)).enumerate() {
            let weight = if cfg.use_sparsity_loss { cfg.sparsity_weight } else { 0.0 };
            let (loss, grads) = weighted_loss_and_grads(&params, &batch.images, &batch.labels, weight);
            let total = loss.total();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, step });
            }
            loss_sum += total;
            steps += 1;
            adam_step(&mut params, &grads, &mut state, cfg);
        }
        if !params.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                step: steps,
            });
        }
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
            test_accuracy: evaluate_accuracy(&params, &test.images, &test.labels),
            sparsity_loss: total_sparsity_loss(params.weights()),
        };
        on_epoch(&metrics);
        log.push(metrics);
    }
    Ok((params, log))
}

/// LeNet300 training run.
pub fn train(cfg: &TrainingConfig, train_split: &MnistSplit, test_split: &MnistSplit) -> Result<(Lenet300Params, Vec<EpochMetrics>)> {
    train_network(&LENET300_SIZES, cfg, train_split, test_split, |_| {})
}
