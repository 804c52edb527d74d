//! Minimal neural-network engine: the fixed layer catalog needed by the
//! predictor architectures, reverse-mode differentiation, MAE loss, the
//! Adadelta update rule and finite-difference gradient checking.
//!
//! Tensors flow as `(time, channels)` matrices; vectors are `(1, n)`.
//! Networks are plain ordered layer stacks. Two composite layers cover the
//! non-sequential shapes: [`Layer::Parallel`] fans the same input through
//! several sub-stacks and concatenates their `(1, c)` outputs (the
//! multi-window text CNN), and [`Layer::Pair`], valid only as the first
//! layer, routes a two-part input through two sub-stacks (joint
//! text+signal fusion).

mod adadelta;
mod checkpoint;
pub mod gradcheck;
mod loss;

pub use adadelta::{adadelta_step, AdadeltaConfig, AdadeltaState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData};
pub use loss::mae_loss;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Nonlinearity applied inside a convolution (the `f` of the conv feature
/// map definition).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub width: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub act: Activation,
    /// `(out_channels, width * in_channels)`; row o is filter o over the
    /// flattened `(width, in_channels)` window.
    pub weight: Tensor2,
    pub bias: Tensor2,
}

impl Conv1d {
    pub fn glorot(
        width: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (width * in_channels) as f64;
        let fan_out = (width * out_channels) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        Self::uniform_init(width, stride, in_channels, out_channels, act, limit, rng)
    }

    /// He-uniform initialization; keeps activation variance stable through
    /// deep ReLU stacks, where Glorot scaling decays it per layer.
    pub fn he_uniform(
        width: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (width * in_channels) as f64;
        let limit = (6.0 / fan_in).sqrt();
        Self::uniform_init(width, stride, in_channels, out_channels, act, limit, rng)
    }

    fn uniform_init(
        width: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        act: Activation,
        limit: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut weight = Tensor2::zeros(out_channels, width * in_channels);
        for w in weight.data.iter_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        Conv1d {
            width,
            stride,
            in_channels,
            out_channels,
            act,
            weight,
            bias: Tensor2::zeros(1, out_channels),
        }
    }

    pub fn out_len(&self, in_len: usize) -> Result<usize> {
        if in_len < self.width {
            return Err(Error::InputTooShort {
                len: in_len,
                width: self.width,
            });
        }
        Ok((in_len - self.width) / self.stride + 1)
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor2, // (out_dim, in_dim)
    pub bias: Tensor2,   // (1, out_dim)
}

impl Dense {
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weight = Tensor2::zeros(out_dim, in_dim);
        for w in weight.data.iter_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        Dense {
            in_dim,
            out_dim,
            weight,
            bias: Tensor2::zeros(1, out_dim),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Tensor2, // (1, c)
    pub beta: Tensor2,  // (1, c)
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Tensor2 {
                rows: 1,
                cols: channels,
                data: vec![1.0; channels],
            },
            beta: Tensor2::zeros(1, channels),
            epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv1d(Conv1d),
    /// Mean of the k largest values of each channel's feature map.
    MaxPoolTopK { k: usize },
    /// Non-overlapping max pooling along time; the width clamps to the
    /// input length when the time axis is short.
    MaxPool1d { width: usize },
    GlobalAvgPool,
    Dense(Dense),
    /// Inverted dropout: train-time scaling by 1/(1−rate), identity at eval.
    Dropout { rate: f64 },
    Relu,
    /// Normalizes each channel over the time axis of one input (so batch
    /// items stay independent); learnable per-channel gain and shift.
    BatchNorm(BatchNorm),
    Softmax,
    /// Fixed dot product with a constant vector, `(1, c) -> (1, 1)`.
    WeightedSum { weights: Vec<f64> },
    /// Fan the same input through sub-stacks, concatenate `(1, c)` outputs.
    Parallel(Vec<Vec<Layer>>),
    /// Two-input branches (only valid as a network's first layer).
    Pair {
        left: Vec<Layer>,
        right: Vec<Layer>,
    },
}

/// Input to a network: one tensor, or a (text, signal) pair for fusion
/// networks.
#[derive(Debug, Clone)]
pub enum NetInput {
    Single(Tensor2),
    Pair(Tensor2, Tensor2),
}

#[derive(Debug)]
pub enum LayerCache {
    Conv {
        input: Tensor2,
        pre: Option<Tensor2>, // pre-activation, kept for ReLU backward
    },
    TopK {
        // per channel: indices averaged, plus the input length
        indices: Vec<Vec<usize>>,
        in_rows: usize,
    },
    MaxPool {
        argmax: Vec<usize>, // (out_row, channel) -> input row
        in_rows: usize,
        out_rows: usize,
    },
    Gap {
        in_rows: usize,
    },
    Dense {
        input: Tensor2,
    },
    Dropout {
        mask: Vec<f64>, // empty = identity
    },
    Relu {
        positive: Vec<bool>,
    },
    BatchNorm {
        xhat: Tensor2,
        inv_std: Vec<f64>,
    },
    Softmax {
        output: Tensor2,
    },
    WeightedSum,
    Parallel {
        branches: Vec<Vec<LayerCache>>,
        widths: Vec<usize>,
        in_shape: (usize, usize),
    },
    None,
}

#[derive(Debug)]
pub struct Forward {
    pub output: Tensor2,
    cache: NetCache,
}

#[derive(Debug)]
enum NetCache {
    Single(Vec<LayerCache>),
    Pair {
        left: Vec<LayerCache>,
        right: Vec<LayerCache>,
        split: usize,
        rest: Vec<LayerCache>,
    },
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub opt: Option<AdadeltaState>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers, opt: None }
    }

    /// Number of parameter tensors, depth-first in layer order.
    pub fn param_count(&self) -> usize {
        stack_param_count(&self.layers)
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        let mut out = Vec::with_capacity(self.param_count());
        collect_params(&self.layers, &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = Vec::new();
        collect_params_mut(&mut self.layers, &mut out);
        out
    }

    /// Zero gradient tensors matching the parameter list.
    pub fn zero_grads(&self) -> Vec<Tensor2> {
        self.params()
            .iter()
            .map(|p| Tensor2::zeros(p.rows, p.cols))
            .collect()
    }

    pub fn forward(&self, input: &NetInput, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Forward> {
        match (self.layers.first(), input) {
            (Some(Layer::Pair { left, right }), NetInput::Pair(a, b)) => {
                let mut lc = Vec::with_capacity(left.len());
                let la = forward_stack(left, a.clone(), mode, rng, &mut lc)?;
                let mut rc = Vec::with_capacity(right.len());
                let ra = forward_stack(right, b.clone(), mode, rng, &mut rc)?;
                if la.rows != 1 || ra.rows != 1 {
                    return Err(Error::LayerShape {
                        index: 0,
                        msg: "pair branches must emit (1, c) vectors".into(),
                    });
                }
                let split = la.cols;
                let mut joined = la.data;
                joined.extend_from_slice(&ra.data);
                let x = Tensor2::row_vector(joined);
                let mut rest_c = Vec::with_capacity(self.layers.len() - 1);
                let output = forward_stack(&self.layers[1..], x, mode, rng, &mut rest_c)?;
                Ok(Forward {
                    output,
                    cache: NetCache::Pair {
                        left: lc,
                        right: rc,
                        split,
                        rest: rest_c,
                    },
                })
            }
            (Some(Layer::Pair { .. }), NetInput::Single(_)) => Err(Error::LayerShape {
                index: 0,
                msg: "network expects a (text, signal) input pair".into(),
            }),
            (_, NetInput::Pair(..)) => Err(Error::LayerShape {
                index: 0,
                msg: "network expects a single input".into(),
            }),
            (_, NetInput::Single(x)) => {
                let mut caches = Vec::with_capacity(self.layers.len());
                let output = forward_stack(&self.layers, x.clone(), mode, rng, &mut caches)?;
                Ok(Forward {
                    output,
                    cache: NetCache::Single(caches),
                })
            }
        }
    }

    /// Eval-mode scalar prediction (networks ending in a `(1, 1)` head).
    pub fn predict_scalar(&self, input: &NetInput) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.forward(input, Mode::Eval, &mut rng)?;
        if f.output.shape() != (1, 1) {
            return Err(Error::LayerShape {
                index: self.layers.len(),
                msg: format!("expected (1,1) output, got {:?}", f.output.shape()),
            });
        }
        Ok(f.output.data[0])
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given the
    /// forward cache and dloss/doutput.
    pub fn backward(&self, fwd: &Forward, grad_out: Tensor2) -> Result<Vec<Tensor2>> {
        let mut grads = self.zero_grads();
        match &fwd.cache {
            NetCache::Single(caches) => {
                if caches.len() != self.layers.len() {
                    return Err(Error::Checkpoint("stale forward cache".into()));
                }
                backward_stack(&self.layers, caches, grad_out, &mut grads)?;
            }
            NetCache::Pair {
                left,
                right,
                split,
                rest,
            } => {
                let (l_layers, r_layers) = match &self.layers[0] {
                    Layer::Pair { left, right } => (left, right),
                    _ => return Err(Error::Checkpoint("stale forward cache".into())),
                };
                let n_left = stack_param_count(l_layers);
                let n_right = stack_param_count(r_layers);
                let g_joined = backward_stack(
                    &self.layers[1..],
                    rest,
                    grad_out,
                    &mut grads[n_left + n_right..],
                )?;
                let (gl, gr) = g_joined.data.split_at(*split);
                backward_stack(
                    l_layers,
                    left,
                    Tensor2::row_vector(gl.to_vec()),
                    &mut grads[..n_left],
                )?;
                backward_stack(
                    r_layers,
                    right,
                    Tensor2::row_vector(gr.to_vec()),
                    &mut grads[n_left..n_left + n_right],
                )?;
            }
        }
        Ok(grads)
    }

    /// Replace parameters (and optionally optimizer accumulators) with
    /// shape-checked tensors in flatten order.
    pub fn load_params(
        &mut self,
        params: Vec<Tensor2>,
        opt: Option<(Vec<Tensor2>, Vec<Tensor2>)>,
    ) -> Result<()> {
        {
            let mine = self.params_mut();
            if mine.len() != params.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter count mismatch: {} vs {}",
                    mine.len(),
                    params.len()
                )));
            }
            for (dst, src) in mine.into_iter().zip(params) {
                if dst.shape() != src.shape() {
                    return Err(Error::Checkpoint(format!(
                        "parameter shape mismatch: {:?} vs {:?}",
                        dst.shape(),
                        src.shape()
                    )));
                }
                *dst = src;
            }
        }
        if let Some((eg2, edx2)) = opt {
            let shapes: Vec<(usize, usize)> = self.params().iter().map(|p| p.shape()).collect();
            if eg2.len() != shapes.len() || edx2.len() != shapes.len() {
                return Err(Error::Checkpoint("optimizer state count mismatch".into()));
            }
            for (t, s) in eg2.iter().chain(edx2.iter()).zip(shapes.iter().cycle()) {
                if t.shape() != *s {
                    return Err(Error::Checkpoint("optimizer state shape mismatch".into()));
                }
            }
            self.opt = Some(AdadeltaState::from_parts(eg2, edx2));
        }
        Ok(())
    }
}

use rand::SeedableRng;

fn stack_param_count(layers: &[Layer]) -> usize {
    layers.iter().map(layer_param_count).sum()
}

fn layer_param_count(l: &Layer) -> usize {
    match l {
        Layer::Conv1d(_) | Layer::Dense(_) | Layer::BatchNorm(_) => 2,
        Layer::Parallel(bs) => bs.iter().map(|b| stack_param_count(b)).sum(),
        Layer::Pair { left, right } => stack_param_count(left) + stack_param_count(right),
        _ => 0,
    }
}

fn collect_params<'a>(layers: &'a [Layer], out: &mut Vec<&'a Tensor2>) {
    for l in layers {
        match l {
            Layer::Conv1d(c) => {
                out.push(&c.weight);
                out.push(&c.bias);
            }
            Layer::Dense(d) => {
                out.push(&d.weight);
                out.push(&d.bias);
            }
            Layer::BatchNorm(b) => {
                out.push(&b.gamma);
                out.push(&b.beta);
            }
            Layer::Parallel(bs) => {
                for b in bs {
                    collect_params(b, out);
                }
            }
            Layer::Pair { left, right } => {
                collect_params(left, out);
                collect_params(right, out);
            }
            _ => {}
        }
    }
}

fn collect_params_mut<'a>(layers: &'a mut [Layer], out: &mut Vec<&'a mut Tensor2>) {
    for l in layers {
        match l {
            Layer::Conv1d(c) => {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            Layer::Dense(d) => {
                out.push(&mut d.weight);
                out.push(&mut d.bias);
            }
            Layer::BatchNorm(b) => {
                out.push(&mut b.gamma);
                out.push(&mut b.beta);
            }
            Layer::Parallel(bs) => {
                for b in bs {
                    collect_params_mut(b, out);
                }
            }
            Layer::Pair { left, right } => {
                collect_params_mut(left, out);
                collect_params_mut(right, out);
            }
            _ => {}
        }
    }
}

fn forward_stack(
    layers: &[Layer],
    mut x: Tensor2,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    caches: &mut Vec<LayerCache>,
) -> Result<Tensor2> {
    for (i, layer) in layers.iter().enumerate() {
        let (out, cache) = layer_forward(layer, x, mode, rng).map_err(|e| match e {
            Error::LayerShape { msg, .. } => Error::LayerShape { index: i, msg },
            other => Error::LayerShape {
                index: i,
                msg: other.to_string(),
            },
        })?;
        caches.push(cache);
        x = out;
    }
    Ok(x)
}

fn layer_forward(
    layer: &Layer,
    x: Tensor2,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor2, LayerCache)> {
    match layer {
        Layer::Conv1d(c) => conv_forward(c, x),
        Layer::MaxPoolTopK { k } => topk_forward(*k, x),
        Layer::MaxPool1d { width } => maxpool_forward(*width, x),
        Layer::GlobalAvgPool => {
            let t = x.rows;
            if t == 0 {
                return Err(Error::LayerShape {
                    index: 0,
                    msg: "global average pool over empty input".into(),
                });
            }
            let mut out = Tensor2::zeros(1, x.cols);
            for i in 0..t {
                for (o, v) in out.data.iter_mut().zip(x.row(i)) {
                    *o += v;
                }
            }
            for o in out.data.iter_mut() {
                *o /= t as f64;
            }
            Ok((out, LayerCache::Gap { in_rows: t }))
        }
        Layer::Dense(d) => {
            if x.rows != 1 || x.cols != d.in_dim {
                return Err(Error::LayerShape {
                    index: 0,
                    msg: format!(
                        "dense expects (1, {}), got {:?}",
                        d.in_dim,
                        x.shape()
                    ),
                });
            }
            let mut out = Tensor2::zeros(1, d.out_dim);
            for o in 0..d.out_dim {
                out.data[o] = d.bias.data[o] + dot(d.weight.row(o), x.row(0));
            }
            Ok((out, LayerCache::Dense { input: x }))
        }
        Layer::Dropout { rate } => {
            if mode == Mode::Eval || *rate == 0.0 {
                return Ok((x, LayerCache::Dropout { mask: Vec::new() }));
            }
            let keep_scale = 1.0 / (1.0 - rate);
            let mut out = x;
            let mask: Vec<f64> = out
                .data
                .iter_mut()
                .map(|v| {
                    let m = if rng.gen::<f64>() < *rate { 0.0 } else { keep_scale };
                    *v *= m;
                    m
                })
                .collect();
            Ok((out, LayerCache::Dropout { mask }))
        }
        Layer::Relu => {
            let mut out = x;
            let positive: Vec<bool> = out
                .data
                .iter_mut()
                .map(|v| {
                    if *v > 0.0 {
                        true
                    } else {
                        *v = 0.0;
                        false
                    }
                })
                .collect();
            Ok((out, LayerCache::Relu { positive }))
        }
        Layer::BatchNorm(b) => batchnorm_forward(b, x),
        Layer::Softmax => {
            if x.rows != 1 {
                return Err(Error::LayerShape {
                    index: 0,
                    msg: format!("softmax expects (1, c), got {:?}", x.shape()),
                });
            }
            let max = x.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut out = x;
            let mut sum = 0.0;
            for v in out.data.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in out.data.iter_mut() {
                *v /= sum;
            }
            let cache = LayerCache::Softmax { output: out.clone() };
            Ok((out, cache))
        }
        Layer::WeightedSum { weights } => {
            if x.rows != 1 || x.cols != weights.len() {
                return Err(Error::LayerShape {
                    index: 0,
                    msg: format!(
                        "weighted sum expects (1, {}), got {:?}",
                        weights.len(),
                        x.shape()
                    ),
                });
            }
            let v = dot(&x.data, weights);
            Ok((
                Tensor2::row_vector(vec![v]),
                LayerCache::WeightedSum,
            ))
        }
        Layer::Parallel(branches) => {
            let in_shape = x.shape();
            let mut caches = Vec::with_capacity(branches.len());
            let mut widths = Vec::with_capacity(branches.len());
            let mut joined = Vec::new();
            for branch in branches {
                let mut bc = Vec::with_capacity(branch.len());
                let out = forward_stack(branch, x.clone(), mode, rng, &mut bc)?;
                if out.rows != 1 {
                    return Err(Error::LayerShape {
                        index: 0,
                        msg: "parallel branches must emit (1, c) vectors".into(),
                    });
                }
                widths.push(out.cols);
                joined.extend_from_slice(&out.data);
                caches.push(bc);
            }
            Ok((
                Tensor2::row_vector(joined),
                LayerCache::Parallel {
                    branches: caches,
                    widths,
                    in_shape,
                },
            ))
        }
        Layer::Pair { .. } => Err(Error::LayerShape {
            index: 0,
            msg: "pair layer is only valid as the network input".into(),
        }),
    }
}

fn conv_forward(c: &Conv1d, x: Tensor2) -> Result<(Tensor2, LayerCache)> {
    if x.cols != c.in_channels {
        return Err(Error::LayerShape {
            index: 0,
            msg: format!(
                "conv expects {} channels, got {}",
                c.in_channels, x.cols
            ),
        });
    }
    let t_out = c.out_len(x.rows)?;
    let mut pre = Tensor2::zeros(t_out, c.out_channels);
    for i in 0..t_out {
        let window = x.rows_flat(i * c.stride, c.width);
        let row = pre.row_mut(i);
        for o in 0..c.out_channels {
            row[o] = c.bias.data[o] + dot(c.weight.row(o), window);
        }
    }
    let (out, cache_pre) = match c.act {
        Activation::Identity => (pre, None),
        Activation::Relu => {
            let mut out = pre.clone();
            for v in out.data.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            (out, Some(pre))
        }
    };
    Ok((out, LayerCache::Conv { input: x, pre: cache_pre }))
}

fn topk_forward(k: usize, x: Tensor2) -> Result<(Tensor2, LayerCache)> {
    if x.rows == 0 || x.is_empty() {
        return Err(Error::LayerShape {
            index: 0,
            msg: "top-k pooling over empty feature map".into(),
        });
    }
    let kk = k.min(x.rows);
    let mut out = Tensor2::zeros(1, x.cols);
    let mut indices = Vec::with_capacity(x.cols);
    for ch in 0..x.cols {
        let mut vals: Vec<(f64, usize)> = (0..x.rows).map(|i| (x.at(i, ch), i)).collect();
        // largest first; ties resolved to the earlier index
        vals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let top: Vec<usize> = vals[..kk].iter().map(|&(_, i)| i).collect();
        out.data[ch] = vals[..kk].iter().map(|&(v, _)| v).sum::<f64>() / kk as f64;
        indices.push(top);
    }
    Ok((
        out,
        LayerCache::TopK {
            indices,
            in_rows: x.rows,
        },
    ))
}

fn maxpool_forward(width: usize, x: Tensor2) -> Result<(Tensor2, LayerCache)> {
    if x.rows == 0 {
        return Err(Error::LayerShape {
            index: 0,
            msg: "max pooling over empty input".into(),
        });
    }
    let w = width.max(1).min(x.rows);
    let t_out = x.rows / w;
    let mut out = Tensor2::zeros(t_out, x.cols);
    let mut argmax = vec![0usize; t_out * x.cols];
    for j in 0..t_out {
        for ch in 0..x.cols {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = j * w;
            for i in j * w..(j + 1) * w {
                let v = x.at(i, ch);
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            *out.at_mut(j, ch) = best;
            argmax[j * x.cols + ch] = best_i;
        }
    }
    Ok((
        out,
        LayerCache::MaxPool {
            argmax,
            in_rows: x.rows,
            out_rows: t_out,
        },
    ))
}

fn batchnorm_forward(b: &BatchNorm, x: Tensor2) -> Result<(Tensor2, LayerCache)> {
    if x.cols != b.channels {
        return Err(Error::LayerShape {
            index: 0,
            msg: format!("batchnorm expects {} channels, got {}", b.channels, x.cols),
        });
    }
    let t = x.rows as f64;
    let mut xhat = Tensor2::zeros(x.rows, x.cols);
    let mut inv_std = vec![0.0; x.cols];
    for ch in 0..x.cols {
        let mut mean = 0.0;
        for i in 0..x.rows {
            mean += x.at(i, ch);
        }
        mean /= t;
        let mut var = 0.0;
        for i in 0..x.rows {
            let d = x.at(i, ch) - mean;
            var += d * d;
        }
        var /= t;
        let is = 1.0 / (var + b.epsilon).sqrt();
        inv_std[ch] = is;
        for i in 0..x.rows {
            *xhat.at_mut(i, ch) = (x.at(i, ch) - mean) * is;
        }
    }
    let mut out = Tensor2::zeros(x.rows, x.cols);
    for i in 0..x.rows {
        for ch in 0..x.cols {
            *out.at_mut(i, ch) = b.gamma.data[ch] * xhat.at(i, ch) + b.beta.data[ch];
        }
    }
    Ok((out, LayerCache::BatchNorm { xhat, inv_std }))
}

/// Walks layers in reverse; `grads` is the parameter-gradient slice for
/// exactly this stack, in flatten order. Returns dloss/dinput.
fn backward_stack(
    layers: &[Layer],
    caches: &[LayerCache],
    mut grad: Tensor2,
    grads: &mut [Tensor2],
) -> Result<Tensor2> {
    if layers.len() != caches.len() {
        return Err(Error::Checkpoint("stale forward cache".into()));
    }
    // parameter offsets per layer
    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for l in layers {
        offsets.push(acc);
        acc += layer_param_count(l);
    }
    for i in (0..layers.len()).rev() {
        let n = layer_param_count(&layers[i]);
        let slice = &mut grads[offsets[i]..offsets[i] + n];
        grad = layer_backward(&layers[i], &caches[i], grad, slice)?;
    }
    Ok(grad)
}

fn layer_backward(
    layer: &Layer,
    cache: &LayerCache,
    g: Tensor2,
    grads: &mut [Tensor2],
) -> Result<Tensor2> {
    match (layer, cache) {
        (Layer::Conv1d(c), LayerCache::Conv { input, pre }) => {
            let mut g = g;
            if let Some(pre) = pre {
                for (gv, pv) in g.data.iter_mut().zip(&pre.data) {
                    if *pv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let (dw, db) = {
                let (a, b) = grads.split_at_mut(1);
                (&mut a[0], &mut b[0])
            };
            let mut dx = Tensor2::zeros(input.rows, input.cols);
            let t_out = g.rows;
            for i in 0..t_out {
                let window = input.rows_flat(i * c.stride, c.width);
                let g_row = g.row(i);
                for o in 0..c.out_channels {
                    let go = g_row[o];
                    if go == 0.0 {
                        continue;
                    }
                    db.data[o] += go;
                    let w_row_grad = dw.row_mut(o);
                    for (wg, xv) in w_row_grad.iter_mut().zip(window) {
                        *wg += go * xv;
                    }
                }
                // input gradient
                let start = i * c.stride * input.cols;
                for o in 0..c.out_channels {
                    let go = g_row[o];
                    if go == 0.0 {
                        continue;
                    }
                    let w_row = c.weight.row(o);
                    for (t, wv) in w_row.iter().enumerate() {
                        dx.data[start + t] += go * wv;
                    }
                }
            }
            Ok(dx)
        }
        (Layer::MaxPoolTopK { .. }, LayerCache::TopK { indices, in_rows }) => {
            let mut dx = Tensor2::zeros(*in_rows, indices.len());
            for (ch, idxs) in indices.iter().enumerate() {
                let share = g.data[ch] / idxs.len() as f64;
                for &i in idxs {
                    *dx.at_mut(i, ch) += share;
                }
            }
            Ok(dx)
        }
        (
            Layer::MaxPool1d { .. },
            LayerCache::MaxPool {
                argmax,
                in_rows,
                out_rows,
            },
        ) => {
            let cols = g.cols;
            let mut dx = Tensor2::zeros(*in_rows, cols);
            for j in 0..*out_rows {
                for ch in 0..cols {
                    let i = argmax[j * cols + ch];
                    *dx.at_mut(i, ch) += g.at(j, ch);
                }
            }
            Ok(dx)
        }
        (Layer::GlobalAvgPool, LayerCache::Gap { in_rows }) => {
            let share = 1.0 / *in_rows as f64;
            let mut dx = Tensor2::zeros(*in_rows, g.cols);
            for i in 0..*in_rows {
                for ch in 0..g.cols {
                    *dx.at_mut(i, ch) = g.data[ch] * share;
                }
            }
            Ok(dx)
        }
        (Layer::Dense(d), LayerCache::Dense { input }) => {
            let (dw, db) = {
                let (a, b) = grads.split_at_mut(1);
                (&mut a[0], &mut b[0])
            };
            let mut dx = Tensor2::zeros(1, d.in_dim);
            for o in 0..d.out_dim {
                let go = g.data[o];
                db.data[o] += go;
                if go == 0.0 {
                    continue;
                }
                let wg = dw.row_mut(o);
                for (wgv, xv) in wg.iter_mut().zip(input.row(0)) {
                    *wgv += go * xv;
                }
                for (dxv, wv) in dx.data.iter_mut().zip(d.weight.row(o)) {
                    *dxv += go * wv;
                }
            }
            Ok(dx)
        }
        (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
            if mask.is_empty() {
                return Ok(g);
            }
            let mut dx = g;
            for (v, m) in dx.data.iter_mut().zip(mask) {
                *v *= m;
            }
            Ok(dx)
        }
        (Layer::Relu, LayerCache::Relu { positive }) => {
            let mut dx = g;
            for (v, &p) in dx.data.iter_mut().zip(positive) {
                if !p {
                    *v = 0.0;
                }
            }
            Ok(dx)
        }
        (Layer::BatchNorm(b), LayerCache::BatchNorm { xhat, inv_std }) => {
            let t = xhat.rows as f64;
            let (dgamma, dbeta) = {
                let (a, bb) = grads.split_at_mut(1);
                (&mut a[0], &mut bb[0])
            };
            let mut dx = Tensor2::zeros(xhat.rows, xhat.cols);
            for ch in 0..xhat.cols {
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for i in 0..xhat.rows {
                    let gv = g.at(i, ch);
                    sum_g += gv;
                    sum_gx += gv * xhat.at(i, ch);
                }
                dgamma.data[ch] += sum_gx;
                dbeta.data[ch] += sum_g;
                let scale = b.gamma.data[ch] * inv_std[ch];
                let mean_g = sum_g / t;
                let mean_gx = sum_gx / t;
                for i in 0..xhat.rows {
                    *dx.at_mut(i, ch) =
                        scale * (g.at(i, ch) - mean_g - xhat.at(i, ch) * mean_gx);
                }
            }
            Ok(dx)
        }
        (Layer::Softmax, LayerCache::Softmax { output }) => {
            let dot_gy = dot(&g.data, &output.data);
            let mut dx = Tensor2::zeros(1, output.cols);
            for c in 0..output.cols {
                dx.data[c] = output.data[c] * (g.data[c] - dot_gy);
            }
            Ok(dx)
        }
        (Layer::WeightedSum { weights }, LayerCache::WeightedSum) => {
            let g0 = g.data[0];
            Ok(Tensor2::row_vector(weights.iter().map(|w| g0 * w).collect()))
        }
        (
            Layer::Parallel(branches),
            LayerCache::Parallel {
                branches: caches,
                widths,
                in_shape,
            },
        ) => {
            let mut dx = Tensor2::zeros(in_shape.0, in_shape.1);
            let mut col = 0;
            let mut off = 0;
            for ((branch, bc), &w) in branches.iter().zip(caches).zip(widths) {
                let n = stack_param_count(branch);
                let seg = Tensor2::row_vector(g.data[col..col + w].to_vec());
                let gi = backward_stack(branch, bc, seg, &mut grads[off..off + n])?;
                for (a, b) in dx.data.iter_mut().zip(&gi.data) {
                    *a += b;
                }
                col += w;
                off += n;
            }
            Ok(dx)
        }
        _ => Err(Error::Checkpoint("stale forward cache".into())),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
