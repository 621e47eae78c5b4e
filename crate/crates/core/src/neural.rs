//! Minimal dense feedforward machinery: forward, backprop, MSE and
//! softmax-cross-entropy losses, Adam/SGD, deterministic training.
//!
//! Element type is generic so tests can check gradients in f64 while
//! training runs in f32.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis, NdFloat};
use num_traits::FromPrimitive;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DNET_MAGIC: &[u8; 4] = b"DNET";
pub const DNET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("config error: {0}")]
    ConfigError(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("non-finite value encountered during {0}")]
    NumericError(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad weight file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

pub trait Scalar: NdFloat + FromPrimitive {}
impl<T: NdFloat + FromPrimitive> Scalar for T {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub dim: usize,
    pub loss: LossKind,
}

/// Shared trunk computes the hidden chain once with one linear layer per
/// head on top; independent paths give every head its own full chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pathing {
    SharedTrunk,
    IndependentPaths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<HeadSpec>,
    pub pathing: Pathing,
}

impl NetSpec {
    pub fn single_head(input_dim: usize, hidden: Vec<usize>, out_dim: usize, loss: LossKind) -> Self {
        NetSpec {
            input_dim,
            hidden,
            heads: vec![HeadSpec { dim: out_dim, loss }],
            pathing: Pathing::SharedTrunk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.heads.is_empty() {
            return Err(NeuralError::ConfigError("input dim 0 or no heads".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) || self.heads.iter().any(|h| h.dim == 0) {
            return Err(NeuralError::ConfigError("zero-width layer".into()));
        }
        Ok(())
    }

    /// FNV-1a over the serialized descriptor; stored in weight files.
    pub fn hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<A> {
    pub w: Array2<A>,
    pub b: Array1<A>,
}

/// Weight matrices and biases for every path of a network.
///
/// SharedTrunk layout: `paths[0]` is the hidden chain, `paths[1 + h]` a
/// single output layer per head. IndependentPaths layout: `paths[h]` is
/// head `h`'s full chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<A> {
    pub spec: NetSpec,
    pub paths: Vec<Vec<Dense<A>>>,
}

fn sample_normal<A: Scalar>(rng: &mut ChaCha8Rng, std: f64) -> A {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    A::from_f64(z * std).unwrap()
}

fn init_dense<A: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Dense<A> {
    let std = (2.0 / fan_in as f64).sqrt();
    let w = Array2::from_shape_fn((fan_in, fan_out), |_| sample_normal(rng, std));
    let b = Array1::from_elem(fan_out, A::zero());
    Dense { w, b }
}

fn chain_dims(spec: &NetSpec, head: usize) -> Vec<usize> {
    let mut dims = vec![spec.input_dim];
    dims.extend_from_slice(&spec.hidden);
    dims.push(spec.heads[head].dim);
    dims
}

/// Deterministic fan-in-scaled init (variance 2/fan_in).
pub fn init_params<A: Scalar>(spec: &NetSpec, seed: u64) -> Result<Params<A>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = Vec::new();
    match spec.pathing {
        Pathing::IndependentPaths => {
            for h in 0..spec.heads.len() {
                let dims = chain_dims(spec, h);
                let layers = dims
                    .windows(2)
                    .map(|wnd| init_dense(&mut rng, wnd[0], wnd[1]))
                    .collect();
                paths.push(layers);
            }
        }
        Pathing::SharedTrunk => {
            let mut dims = vec![spec.input_dim];
            dims.extend_from_slice(&spec.hidden);
            let trunk = dims
                .windows(2)
                .map(|wnd| init_dense(&mut rng, wnd[0], wnd[1]))
                .collect();
            paths.push(trunk);
            let last = *dims.last().unwrap();
            for head in &spec.heads {
                paths.push(vec![init_dense(&mut rng, last, head.dim)]);
            }
        }
    }
    Ok(Params { spec: spec.clone(), paths })
}

fn relu_inplace<A: Scalar>(x: &mut Array2<A>) {
    x.mapv_inplace(|v| if v > A::zero() { v } else { A::zero() });
}

fn forward_chain<A: Scalar>(layers: &[Dense<A>], input: &Array2<A>) -> (Vec<Array2<A>>, Array2<A>) {
    // returns post-activation hidden states and the final linear output
    let mut acts = Vec::with_capacity(layers.len());
    let mut cur = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        let mut z = cur.dot(&layer.w) + &layer.b;
        if i + 1 < layers.len() {
            relu_inplace(&mut z);
            acts.push(z.clone());
            cur = z;
        } else {
            return (acts, z);
        }
    }
    (acts, cur)
}

/// Per-head outputs for a batch (rows = samples).
pub fn forward<A: Scalar>(params: &Params<A>, input: &Array2<A>) -> Result<Vec<Array2<A>>> {
    if input.ncols() != params.spec.input_dim {
        return Err(NeuralError::ShapeError(format!(
            "input dim {} expected {}",
            input.ncols(),
            params.spec.input_dim
        )));
    }
    let out = match params.spec.pathing {
        Pathing::IndependentPaths => params
            .paths
            .iter()
            .map(|layers| forward_chain(layers, input).1)
            .collect(),
        Pathing::SharedTrunk => {
            let mut cur = input.clone();
            for layer in &params.paths[0] {
                let mut z = cur.dot(&layer.w) + &layer.b;
                relu_inplace(&mut z);
                cur = z;
            }
            params.paths[1..]
                .iter()
                .map(|head| cur.dot(&head[0].w) + &head[0].b)
                .collect::<Vec<_>>()
        }
    };
    Ok(out)
}

fn softmax_rows<A: Scalar>(logits: &Array2<A>) -> Array2<A> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(A::neg_infinity(), A::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Loss for one head: MSE is the batch-mean of the summed squared errors;
/// CE is the batch-mean softmax cross-entropy against a one-hot target.
pub fn head_loss<A: Scalar>(kind: LossKind, output: &Array2<A>, target: &Array2<A>) -> Result<A> {
    if output.dim() != target.dim() {
        return Err(NeuralError::ShapeError(format!(
            "output {:?} vs target {:?}",
            output.dim(),
            target.dim()
        )));
    }
    let batch = A::from_usize(output.nrows()).unwrap();
    let loss = match kind {
        LossKind::Mse => {
            let diff = output - target;
            diff.mapv(|v| v * v).sum() / batch
        }
        LossKind::SoftmaxCrossEntropy => {
            let probs = softmax_rows(output);
            let eps = A::from_f64(1e-300).unwrap();
            let mut total = A::zero();
            for (prow, trow) in probs.rows().into_iter().zip(target.rows()) {
                for (p, t) in prow.iter().zip(trow.iter()) {
                    if *t > A::zero() {
                        total = total - *t * (*p + eps).ln();
                    }
                }
            }
            total / batch
        }
    };
    if !loss.is_finite() {
        return Err(NeuralError::NumericError("loss"));
    }
    Ok(loss)
}

/// Total loss over all heads.
pub fn loss<A: Scalar>(spec: &NetSpec, outputs: &[Array2<A>], targets: &[Array2<A>]) -> Result<A> {
    if outputs.len() != spec.heads.len() || targets.len() != spec.heads.len() {
        return Err(NeuralError::ShapeError("head count mismatch".into()));
    }
    let mut total = A::zero();
    for ((head, out), tgt) in spec.heads.iter().zip(outputs).zip(targets) {
        total = total + head_loss(head.loss, out, tgt)?;
    }
    Ok(total)
}

fn loss_output_grad<A: Scalar>(kind: LossKind, output: &Array2<A>, target: &Array2<A>) -> Array2<A> {
    let batch = A::from_usize(output.nrows()).unwrap();
    match kind {
        LossKind::Mse => {
            let two = A::from_f64(2.0).unwrap();
            (output - target).mapv(|v| two * v / batch)
        }
        LossKind::SoftmaxCrossEntropy => {
            let probs = softmax_rows(output);
            (&probs - target).mapv(|v| v / batch)
        }
    }
}

fn backward_chain<A: Scalar>(
    layers: &[Dense<A>],
    input: &Array2<A>,
    acts: &[Array2<A>],
    out_grad: &Array2<A>,
) -> (Vec<Dense<A>>, Array2<A>) {
    let mut grads: Vec<Dense<A>> = Vec::with_capacity(layers.len());
    let mut delta = out_grad.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        let below: &Array2<A> = if i == 0 { input } else { &acts[i - 1] };
        let dw = below.t().dot(&delta);
        let db = delta.sum_axis(Axis(0));
        let mut dx = delta.dot(&layer.w.t());
        if i > 0 {
            // back through ReLU of the layer below
            dx.zip_mut_with(&acts[i - 1], |g, &a| {
                if a <= A::zero() {
                    *g = A::zero();
                }
            });
        }
        grads.push(Dense { w: dw, b: db });
        delta = dx;
    }
    grads.reverse();
    (grads, delta)
}

/// Exact gradients of `loss` with respect to every parameter.
pub fn gradient<A: Scalar>(
    params: &Params<A>,
    input: &Array2<A>,
    targets: &[Array2<A>],
) -> Result<(A, Params<A>)> {
    let spec = &params.spec;
    if targets.len() != spec.heads.len() {
        return Err(NeuralError::ShapeError("head count mismatch".into()));
    }
    let mut grad_paths: Vec<Vec<Dense<A>>>;
    let mut total_loss = A::zero();
    match spec.pathing {
        Pathing::IndependentPaths => {
            grad_paths = Vec::with_capacity(params.paths.len());
            for (h, layers) in params.paths.iter().enumerate() {
                let (acts, out) = forward_chain(layers, input);
                total_loss = total_loss + head_loss(spec.heads[h].loss, &out, &targets[h])?;
                let og = loss_output_grad(spec.heads[h].loss, &out, &targets[h]);
                let (grads, _) = backward_chain(layers, input, &acts, &og);
                grad_paths.push(grads);
            }
        }
        Pathing::SharedTrunk => {
            let trunk = &params.paths[0];
            let mut acts: Vec<Array2<A>> = Vec::with_capacity(trunk.len());
            let mut cur = input.clone();
            for layer in trunk {
                let mut z = cur.dot(&layer.w) + &layer.b;
                relu_inplace(&mut z);
                acts.push(z.clone());
                cur = z;
            }
            let top = acts.last().cloned().unwrap_or_else(|| input.clone());
            let mut head_grads: Vec<Vec<Dense<A>>> = Vec::new();
            let mut top_grad: Array2<A> = Array2::zeros(top.dim());
            for (h, head) in params.paths[1..].iter().enumerate() {
                let out = top.dot(&head[0].w) + &head[0].b;
                total_loss = total_loss + head_loss(spec.heads[h].loss, &out, &targets[h])?;
                let og = loss_output_grad(spec.heads[h].loss, &out, &targets[h]);
                let dw = top.t().dot(&og);
                let db = og.sum_axis(Axis(0));
                top_grad = top_grad + og.dot(&head[0].w.t());
                head_grads.push(vec![Dense { w: dw, b: db }]);
            }
            // back through the trunk (last activation's ReLU included)
            if !trunk.is_empty() {
                top_grad.zip_mut_with(acts.last().unwrap(), |g, &a| {
                    if a <= A::zero() {
                        *g = A::zero();
                    }
                });
                let mut delta = top_grad;
                let mut trunk_grads: Vec<Dense<A>> = Vec::with_capacity(trunk.len());
                for (i, layer) in trunk.iter().enumerate().rev() {
                    let below: &Array2<A> = if i == 0 { input } else { &acts[i - 1] };
                    let dw = below.t().dot(&delta);
                    let db = delta.sum_axis(Axis(0));
                    let mut dx = delta.dot(&layer.w.t());
                    if i > 0 {
                        dx.zip_mut_with(&acts[i - 1], |g, &a| {
                            if a <= A::zero() {
                                *g = A::zero();
                            }
                        });
                    }
                    trunk_grads.push(Dense { w: dw, b: db });
                    delta = dx;
                }
                trunk_grads.reverse();
                grad_paths = vec![trunk_grads];
            } else {
                grad_paths = vec![Vec::new()];
            }
            grad_paths.extend(head_grads);
        }
    }
    if !total_loss.is_finite() {
        return Err(NeuralError::NumericError("gradient"));
    }
    Ok((total_loss, Params { spec: spec.clone(), paths: grad_paths }))
}

// ---------------------------------------------------------------------------
// training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Fraction of the dataset used for training; the rest is held out.
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 64,
            epochs: 100,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            train_fraction: 1.0,
        }
    }
}

/// Inputs as rows plus per-head targets with matching row counts.
#[derive(Debug, Clone)]
pub struct Dataset<A> {
    pub inputs: Array2<A>,
    pub targets: Vec<Array2<A>>,
}

impl<A: Scalar> Dataset<A> {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Dataset<A> {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.iter().map(|t| t.select(Axis(0), idx)).collect(),
        }
    }
}

/// Deterministic shuffled split into (train, holdout) index sets.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5011_u64);
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let k = ((n as f64) * train_fraction).round() as usize;
    let k = k.min(n);
    let train = idx[..k].to_vec();
    let holdout = idx[k..].to_vec();
    (train, holdout)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_batch_loss: f64,
}

pub struct TrainResult<A> {
    pub params: Params<A>,
    pub history: Vec<EpochStats>,
}

struct AdamState<A> {
    m: Vec<Vec<Dense<A>>>,
    v: Vec<Vec<Dense<A>>>,
    t: i32,
}

fn zeros_like<A: Scalar>(params: &Params<A>) -> Vec<Vec<Dense<A>>> {
    params
        .paths
        .iter()
        .map(|layers| {
            layers
                .iter()
                .map(|l| Dense { w: Array2::zeros(l.w.dim()), b: Array1::zeros(l.b.dim()) })
                .collect()
        })
        .collect()
}

fn apply_update<A: Scalar>(
    params: &mut Params<A>,
    grads: &Params<A>,
    config: &TrainConfig,
    adam: &mut Option<AdamState<A>>,
) {
    let lr = A::from_f64(config.learning_rate).unwrap();
    match config.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.paths.iter_mut().zip(&grads.paths) {
                for (pl, gl) in p.iter_mut().zip(g) {
                    pl.w.zip_mut_with(&gl.w, |w, &gw| *w = *w - lr * gw);
                    pl.b.zip_mut_with(&gl.b, |b, &gb| *b = *b - lr * gb);
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let st = adam.as_mut().expect("adam state");
            st.t += 1;
            let b1 = A::from_f64(beta1).unwrap();
            let b2 = A::from_f64(beta2).unwrap();
            let one = A::one();
            let epsa = A::from_f64(eps).unwrap();
            let bc1 = one - A::from_f64(beta1.powi(st.t)).unwrap();
            let bc2 = one - A::from_f64(beta2.powi(st.t)).unwrap();
            for (pi, (p, g)) in params.paths.iter_mut().zip(&grads.paths).enumerate() {
                for (li, (pl, gl)) in p.iter_mut().zip(g).enumerate() {
                    let m = &mut st.m[pi][li];
                    let v = &mut st.v[pi][li];
                    m.w.zip_mut_with(&gl.w, |m, &gw| *m = b1 * *m + (one - b1) * gw);
                    v.w.zip_mut_with(&gl.w, |v, &gw| *v = b2 * *v + (one - b2) * gw * gw);
                    m.b.zip_mut_with(&gl.b, |m, &gb| *m = b1 * *m + (one - b1) * gb);
                    v.b.zip_mut_with(&gl.b, |v, &gb| *v = b2 * *v + (one - b2) * gb * gb);
                    ndarray::Zip::from(&mut pl.w)
                        .and(&m.w)
                        .and(&v.w)
                        .for_each(|w, &m, &v| {
                            *w = *w - lr * (m / bc1) / ((v / bc2).sqrt() + epsa);
                        });
                    ndarray::Zip::from(&mut pl.b)
                        .and(&m.b)
                        .and(&v.b)
                        .for_each(|b, &m, &v| {
                            *b = *b - lr * (m / bc1) / ((v / bc2).sqrt() + epsa);
                        });
                }
            }
        }
    }
}

/// Train on the seed-determined `train_fraction` split of `data`, invoking
/// `on_epoch` after every epoch (e.g. to record full-dataset accuracy).
pub fn train_with_callback<A: Scalar, F: FnMut(usize, &Params<A>)>(
    spec: &NetSpec,
    data: &Dataset<A>,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainResult<A>> {
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(NeuralError::ConfigError("train_fraction out of range".into()));
    }
    let (train_idx, _) = split_indices(data.len(), config.train_fraction, config.seed);
    if train_idx.is_empty() {
        return Err(NeuralError::ConfigError("empty train split".into()));
    }
    let train = data.select(&train_idx);
    let mut params = init_params::<A>(spec, config.seed)?;
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState { m: zeros_like(&params), v: zeros_like(&params), t: 0 }),
        Optimizer::Sgd => None,
    };
    let mut history = Vec::with_capacity(config.epochs);
    let n = train.len();
    let bs = config.batch_size.max(1);
    for epoch in 0..config.epochs {
        // per-epoch shuffle derived from the master seed
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e3779b97f4a7c15).wrapping_mul(epoch as u64 + 1));
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let batch = train.select(chunk);
            let (l, grads) = gradient(&params, &batch.inputs, &batch.targets)?;
            apply_update(&mut params, &grads, config, &mut adam);
            loss_sum += l.to_f64().unwrap();
            batches += 1;
        }
        history.push(EpochStats { epoch, mean_batch_loss: loss_sum / batches as f64 });
        on_epoch(epoch, &params);
    }
    Ok(TrainResult { params, history })
}

pub fn train<A: Scalar>(spec: &NetSpec, data: &Dataset<A>, config: &TrainConfig) -> Result<TrainResult<A>> {
    train_with_callback(spec, data, config, |_, _| {})
}

/// Fraction of rows whose argmax matches the target argmax, per head,
/// averaged over heads.
pub fn argmax_accuracy<A: Scalar>(outputs: &[Array2<A>], targets: &[Array2<A>]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (out, tgt) in outputs.iter().zip(targets) {
        for (orow, trow) in out.rows().into_iter().zip(tgt.rows()) {
            let oa = orow
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i);
            let ta = trow
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i);
            if oa == ta {
                correct += 1;
            }
            total += 1;
        }
    }
    correct as f64 / total as f64
}

// ---------------------------------------------------------------------------
// weight file

/// Little-endian: magic "DNET", version, spec hash, JSON spec descriptor,
/// float32 parameters in path/layer order.
pub fn write_params<A: Scalar, W: Write>(mut w: W, params: &Params<A>) -> Result<()> {
    w.write_all(DNET_MAGIC)?;
    w.write_all(&DNET_VERSION.to_le_bytes())?;
    w.write_all(&params.spec.hash().to_le_bytes())?;
    let desc = serde_json::to_vec(&params.spec).expect("spec serializes");
    w.write_all(&(desc.len() as u32).to_le_bytes())?;
    w.write_all(&desc)?;
    for layers in &params.paths {
        for layer in layers {
            for &x in layer.w.iter() {
                w.write_all(&(x.to_f32().unwrap()).to_le_bytes())?;
            }
            for &x in layer.b.iter() {
                w.write_all(&(x.to_f32().unwrap()).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_params<A: Scalar, R: Read>(mut r: R) -> Result<Params<A>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DNET_MAGIC {
        return Err(NeuralError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != DNET_VERSION {
        return Err(NeuralError::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let stored_hash = u64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let desc_len = u32::from_le_bytes(b4) as usize;
    let mut desc = vec![0u8; desc_len];
    r.read_exact(&mut desc)?;
    let spec: NetSpec =
        serde_json::from_slice(&desc).map_err(|e| NeuralError::Format(format!("bad spec: {e}")))?;
    if spec.hash() != stored_hash {
        return Err(NeuralError::Format("spec hash mismatch".into()));
    }
    let mut params = init_params::<A>(&spec, 0)?;
    for layers in &mut params.paths {
        for layer in layers {
            for x in layer.w.iter_mut() {
                r.read_exact(&mut b4)?;
                *x = A::from_f32(f32::from_le_bytes(b4)).unwrap();
            }
            for x in layer.b.iter_mut() {
                r.read_exact(&mut b4)?;
                *x = A::from_f32(f32::from_le_bytes(b4)).unwrap();
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_spec(loss: LossKind, pathing: Pathing) -> NetSpec {
        NetSpec {
            input_dim: 5,
            hidden: vec![9, 7],
            heads: vec![HeadSpec { dim: 4, loss }],
            pathing,
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = small_spec(LossKind::Mse, Pathing::SharedTrunk);
        let a = init_params::<f64>(&spec, 11).unwrap();
        let b = init_params::<f64>(&spec, 11).unwrap();
        let c = init_params::<f64>(&spec, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_variance_matches_fan_in_scaling() {
        let spec = NetSpec::single_head(100, vec![], 100, LossKind::Mse);
        let p = init_params::<f64>(&spec, 3).unwrap();
        let ws: Vec<f64> = p.paths[1][0].w.iter().cloned().collect();
        let mean = ws.iter().sum::<f64>() / ws.len() as f64;
        let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / ws.len() as f64;
        assert!((var - 0.02).abs() < 0.2 * 0.02, "var = {var}");
    }

    #[test]
    fn softmax_ce_of_uniform_logits_is_ln_c() {
        for c in [2usize, 3, 5, 10] {
            let out = Array2::<f64>::zeros((1, c));
            let mut tgt = Array2::<f64>::zeros((1, c));
            tgt[[0, 0]] = 1.0;
            let l = head_loss(LossKind::SoftmaxCrossEntropy, &out, &tgt).unwrap();
            assert_relative_eq!(l, (c as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn single_linear_unit_mse_gradient() {
        // y = w x, target 0, x = 1, w = 2 -> dLoss/dw = 2 * 2 * 1 = 4
        let spec = NetSpec::single_head(1, vec![], 1, LossKind::Mse);
        let mut p = init_params::<f64>(&spec, 0).unwrap();
        p.paths[1][0].w[[0, 0]] = 2.0;
        p.paths[1][0].b[0] = 0.0;
        let x = Array2::from_elem((1, 1), 1.0);
        let t = Array2::from_elem((1, 1), 0.0);
        let (_, g) = gradient(&p, &x, std::slice::from_ref(&t)).unwrap();
        assert_relative_eq!(g.paths[1][0].w[[0, 0]], 4.0, epsilon = 1e-12);
    }

    fn finite_difference_check(spec: &NetSpec, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params::<f64>(spec, seed).unwrap();
        let batch = 3;
        let input = Array2::from_shape_fn((batch, spec.input_dim), |_| rng.random::<f64>() - 0.5);
        let targets: Vec<Array2<f64>> = spec
            .heads
            .iter()
            .map(|h| match h.loss {
                LossKind::Mse => Array2::from_shape_fn((batch, h.dim), |_| rng.random::<f64>() - 0.5),
                LossKind::SoftmaxCrossEntropy => {
                    let mut t = Array2::zeros((batch, h.dim));
                    for r in 0..batch {
                        t[[r, rng.random_range(0..h.dim)]] = 1.0;
                    }
                    t
                }
            })
            .collect();
        let (_, grads) = gradient(&params, &input, &targets).unwrap();
        let h = 1e-6;
        let mut checked = 0usize;
        for pi in 0..params.paths.len() {
            for li in 0..params.paths[pi].len() {
                let shape = params.paths[pi][li].w.dim();
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        let mut plus = params.clone();
                        plus.paths[pi][li].w[[r, c]] += h;
                        let lp = loss(spec, &forward(&plus, &input).unwrap(), &targets).unwrap();
                        let mut minus = params.clone();
                        minus.paths[pi][li].w[[r, c]] -= h;
                        let lm = loss(spec, &forward(&minus, &input).unwrap(), &targets).unwrap();
                        let fd = (lp - lm) / (2.0 * h);
                        let an = grads.paths[pi][li].w[[r, c]];
                        let denom = fd.abs().max(an.abs()).max(1e-4);
                        assert!(
                            (fd - an).abs() / denom < 1e-4,
                            "path {pi} layer {li} w[{r},{c}]: fd {fd} vs analytic {an}"
                        );
                        checked += 1;
                    }
                }
                for c in 0..params.paths[pi][li].b.len() {
                    let mut plus = params.clone();
                    plus.paths[pi][li].b[c] += h;
                    let lp = loss(spec, &forward(&plus, &input).unwrap(), &targets).unwrap();
                    let mut minus = params.clone();
                    minus.paths[pi][li].b[c] -= h;
                    let lm = loss(spec, &forward(&minus, &input).unwrap(), &targets).unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let an = grads.paths[pi][li].b[c];
                    let denom = fd.abs().max(an.abs()).max(1e-4);
                    assert!((fd - an).abs() / denom < 1e-4, "bias fd {fd} vs {an}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn gradients_match_finite_differences_mse_trunk() {
        finite_difference_check(&small_spec(LossKind::Mse, Pathing::SharedTrunk), 1);
    }

    #[test]
    fn gradients_match_finite_differences_ce_trunk() {
        finite_difference_check(&small_spec(LossKind::SoftmaxCrossEntropy, Pathing::SharedTrunk), 2);
    }

    #[test]
    fn gradients_match_finite_differences_double_headed() {
        let spec = NetSpec {
            input_dim: 6,
            hidden: vec![8, 8],
            heads: vec![
                HeadSpec { dim: 3, loss: LossKind::Mse },
                HeadSpec { dim: 4, loss: LossKind::Mse },
            ],
            pathing: Pathing::IndependentPaths,
        };
        finite_difference_check(&spec, 3);
    }

    #[test]
    fn gradients_match_finite_differences_shared_two_heads() {
        let spec = NetSpec {
            input_dim: 4,
            hidden: vec![10],
            heads: vec![
                HeadSpec { dim: 2, loss: LossKind::SoftmaxCrossEntropy },
                HeadSpec { dim: 3, loss: LossKind::Mse },
            ],
            pathing: Pathing::SharedTrunk,
        };
        finite_difference_check(&spec, 4);
    }

    #[test]
    fn xor_trains_to_low_mse() {
        let spec = NetSpec::single_head(2, vec![8], 1, LossKind::Mse);
        let inputs = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let targets = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let data = Dataset { inputs: inputs.clone(), targets: vec![targets.clone()] };
        let config = TrainConfig { epochs: 5000, batch_size: 4, learning_rate: 5e-3, ..Default::default() };
        let result = train::<f64>(&spec, &data, &config).unwrap();
        let out = forward(&result.params, &inputs).unwrap();
        let mse = head_loss(LossKind::Mse, &out[0], &targets).unwrap();
        assert!(mse < 1e-2, "XOR mse = {mse}");
    }

    #[test]
    fn linearly_separable_reaches_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100;
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut t = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            let a = rng.random::<f64>() * 2.0 - 1.0;
            let b = rng.random::<f64>() * 2.0 - 1.0;
            x[[i, 0]] = a;
            x[[i, 1]] = b;
            let cls = usize::from(a + b > 0.0);
            t[[i, cls]] = 1.0;
        }
        let spec = NetSpec::single_head(2, vec![16], 2, LossKind::SoftmaxCrossEntropy);
        let data = Dataset { inputs: x.clone(), targets: vec![t.clone()] };
        let config = TrainConfig { epochs: 300, batch_size: 16, learning_rate: 5e-3, ..Default::default() };
        let result = train::<f64>(&spec, &data, &config).unwrap();
        let out = forward(&result.params, &x).unwrap();
        assert_relative_eq!(argmax_accuracy(&out, &data.targets), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = NetSpec::single_head(2, vec![8], 1, LossKind::Mse);
        let inputs = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let targets = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let data = Dataset { inputs, targets: vec![targets] };
        let config = TrainConfig { epochs: 50, batch_size: 2, ..Default::default() };
        let a = train::<f64>(&spec, &data, &config).unwrap();
        let b = train::<f64>(&spec, &data, &config).unwrap();
        assert_eq!(a.params, b.params);
        let ha: Vec<f64> = a.history.iter().map(|e| e.mean_batch_loss).collect();
        let hb: Vec<f64> = b.history.iter().map(|e| e.mean_batch_loss).collect();
        assert_eq!(ha, hb);
    }

    #[test]
    fn empty_train_split_is_config_error() {
        let spec = NetSpec::single_head(2, vec![4], 1, LossKind::Mse);
        let data = Dataset {
            inputs: Array2::<f64>::zeros((10, 2)),
            targets: vec![Array2::<f64>::zeros((10, 1))],
        };
        let config = TrainConfig { train_fraction: 0.0, ..Default::default() };
        assert!(matches!(
            train::<f64>(&spec, &data, &config),
            Err(NeuralError::ConfigError(_))
        ));
    }

    #[test]
    fn weight_file_round_trip() {
        let spec = NetSpec {
            input_dim: 5,
            hidden: vec![6],
            heads: vec![
                HeadSpec { dim: 3, loss: LossKind::Mse },
                HeadSpec { dim: 2, loss: LossKind::SoftmaxCrossEntropy },
            ],
            pathing: Pathing::IndependentPaths,
        };
        let params = init_params::<f32>(&spec, 77).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &params).unwrap();
        let parsed = read_params::<f32, _>(buf.as_slice()).unwrap();
        assert_eq!(params, parsed);
    }

    #[test]
    fn weight_file_rejects_corruption() {
        let spec = NetSpec::single_head(3, vec![4], 2, LossKind::Mse);
        let params = init_params::<f32>(&spec, 1).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &params).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_params::<f32, _>(buf.as_slice()), Err(NeuralError::Format(_))));
        let mut buf2 = Vec::new();
        write_params(&mut buf2, &params).unwrap();
        buf2[8] ^= 0xff; // spec hash
        assert!(matches!(read_params::<f32, _>(buf2.as_slice()), Err(NeuralError::Format(_))));
    }
}
