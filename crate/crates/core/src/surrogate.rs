//! Fully-connected ReLU regressors trained from scratch on one-hot inputs.
//!
//! Hidden layers use ReLU, the single output neuron is linear. Rewards are
//! mapped to `[-1, 1]` before training by a [`RewardScaler`]; the network
//! therefore predicts in scaled units and [`Surrogate::predict`] maps back.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CategoricalDomain, DomainError, EncodedPoint, Point};
use crate::rng;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network: {0}")]
    BadArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine layer with a row-major `outputs x inputs` weight matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self, SurrogateError> {
        let outputs = weights.len();
        if outputs == 0 || outputs != bias.len() {
            return Err(SurrogateError::BadArchitecture(format!(
                "{} weight rows but {} biases",
                outputs,
                bias.len()
            )));
        }
        let inputs = weights[0].len();
        if inputs == 0 || weights.iter().any(|r| r.len() != inputs) {
            return Err(SurrogateError::BadArchitecture("ragged or empty weight matrix".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            weights: weights.into_iter().flatten().collect(),
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.inputs + input]
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    pub fn row_mut(&mut self, out: usize) -> &mut [f64] {
        &mut self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.inputs).map(<[f64]>::to_vec).collect()
    }

    fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = self.bias[o] + dot(self.row(o), x);
        }
    }

    fn affine_one_hot_into(&self, active: &[usize], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = self.row(o);
            *slot = self.bias[o] + active.iter().map(|&k| row[k]).sum::<f64>();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Feedforward ReLU network with exactly one linear output neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, SurrogateError> {
        let last = layers
            .last()
            .ok_or_else(|| SurrogateError::BadArchitecture("no layers".into()))?;
        if last.outputs != 1 {
            return Err(SurrogateError::BadArchitecture(format!(
                "output layer has {} neurons, expected 1",
                last.outputs
            )));
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return Err(SurrogateError::BadArchitecture(format!(
                    "layer {} emits {} values but layer {} takes {}",
                    l,
                    w[0].outputs,
                    l + 1,
                    w[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn glorot<R: Rng + ?Sized>(input_width: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input_width;
        for &h in hidden.iter().chain(std::iter::once(&1)) {
            layers.push(DenseLayer::glorot(width, h, rng));
            width = h;
        }
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// ReLU layers (all but the output layer).
    pub fn hidden_layers(&self) -> &[DenseLayer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.layers[self.layers.len() - 1]
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.pre_activations(x).last().map(|v| v[0]).unwrap_or(0.0)
    }

    /// Forward pass for a 0/1 input given by its set indices.
    pub fn forward_one_hot(&self, active: &[usize]) -> f64 {
        let mut cur = vec![0.0; self.layers[0].outputs];
        self.layers[0].affine_one_hot_into(active, &mut cur);
        for layer in &self.layers[1..] {
            relu_in_place(&mut cur);
            let mut next = vec![0.0; layer.outputs];
            layer.affine_into(&cur, &mut next);
            cur = next;
        }
        cur[0]
    }

    /// Pre-activation values of every layer; the last entry holds the output.
    pub fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                relu_in_place(&mut cur);
            }
            let mut z = vec![0.0; layer.outputs];
            layer.affine_into(&cur, &mut z);
            out.push(z.clone());
            cur = z;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("parameter vector too short");
            }
        }
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Affine reward map `scaled = (raw - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    pub offset: f64,
    pub scale: f64,
}

impl RewardScaler {
    pub fn identity() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    pub fn inverse(&self, scaled: f64) -> f64 {
        scaled * self.scale + self.offset
    }
}

/// Min/max map onto `[-1, 1]`; a constant dataset maps to zero.
pub fn fit_scaler(data: &Dataset) -> Result<RewardScaler, SurrogateError> {
    if data.is_empty() {
        return Err(SurrogateError::EmptyDataset);
    }
    let (lo, hi) = data
        .rewards()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
        let mean = data.rewards().sum::<f64>() / data.len() as f64;
        return Ok(RewardScaler { offset: mean, scale: 1.0 });
    }
    Ok(RewardScaler {
        offset: 0.5 * (hi + lo),
        scale: 0.5 * (hi - lo),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![16],
            learning_rate: 0.01,
            adam_betas: (0.9, 0.999),
            adam_epsilon: 1e-7,
            epochs: 25_000,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::InvalidConfig(m.to_string()));
        let (b1, b2) = self.adam_betas;
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0 < b1 && b1 < 1.0 && 0.0 < b2 && b2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layers must be nonempty");
        }
        Ok(())
    }
}

/// Observed `(point, raw reward)` pairs from one domain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<(Point, f64)>,
}

impl Dataset {
    pub fn new(records: Vec<(Point, f64)>) -> Self {
        Self { records }
    }

    pub fn push(&mut self, p: Point, reward: f64) {
        self.records.push((p, reward));
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.records.iter().map(|(p, _)| p)
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|(_, y)| *y)
    }
}

/// Gradient with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|v| v.fill(0.0));
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

enum Input<'a> {
    Dense(&'a [f64]),
    OneHot(&'a [usize]),
}

struct Workspace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(net: &Mlp) -> Self {
        let shape = |l: &DenseLayer| vec![0.0; l.outputs];
        Self {
            pre: net.layers.iter().map(shape).collect(),
            post: net.layers.iter().map(shape).collect(),
            delta: net.layers.iter().map(shape).collect(),
        }
    }
}

/// Accumulate `weight * d(f(x) - y)^2 / dtheta` into `grad`; returns the squared error.
fn backprop(net: &Mlp, input: &Input<'_>, target: f64, weight: f64, grad: &mut Gradients, ws: &mut Workspace) -> f64 {
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let z = &mut ws.pre[l];
        match (l, input) {
            (0, Input::Dense(x)) => layer.affine_into(x, z),
            (0, Input::OneHot(a)) => layer.affine_one_hot_into(a, z),
            _ => layer.affine_into(&ws.post[l - 1], z),
        }
        let post = &mut ws.post[l];
        post.copy_from_slice(&ws.pre[l]);
        if l < last {
            relu_in_place(post);
        }
    }
    let residual = ws.pre[last][0] - target;
    ws.delta[last][0] = 2.0 * weight * residual;
    for l in (0..=last).rev() {
        let layer = &net.layers[l];
        let (gw, gb) = (&mut grad.weights[l], &mut grad.biases[l]);
        for o in 0..layer.outputs {
            let d = ws.delta[l][o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            match (l, input) {
                (0, Input::Dense(x)) => row.iter_mut().zip(x.iter()).for_each(|(g, xi)| *g += d * xi),
                (0, Input::OneHot(a)) => a.iter().for_each(|&k| row[k] += d),
                _ => row.iter_mut().zip(&ws.post[l - 1]).for_each(|(g, a)| *g += d * a),
            }
        }
        if l > 0 {
            let (lower, upper) = ws.delta.split_at_mut(l);
            let (below, here) = (&mut lower[l - 1], &upper[0]);
            for (i, slot) in below.iter_mut().enumerate() {
                *slot = if ws.pre[l - 1][i] > 0.0 {
                    (0..layer.outputs).map(|o| layer.weight(o, i) * here[o]).sum()
                } else {
                    0.0
                };
            }
        }
    }
    residual * residual
}

/// Mean squared error over `batch` and its gradient w.r.t. every weight and bias.
pub fn loss_gradient(net: &Mlp, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Gradients), SurrogateError> {
    if batch.is_empty() {
        return Err(SurrogateError::EmptyDataset);
    }
    let mut grad = Gradients::zeros_like(net);
    let mut ws = Workspace::new(net);
    let w = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (x, y) in batch {
        if x.len() != net.input_width() {
            return Err(SurrogateError::DimensionMismatch {
                expected: net.input_width(),
                got: x.len(),
            });
        }
        loss += w * backprop(net, &Input::Dense(x), *y, w, &mut grad, &mut ws);
    }
    Ok((loss, grad))
}

/// Mean squared error of the network against an already-scaled batch.
pub fn mse(net: &Mlp, batch: &[(Vec<f64>, f64)]) -> f64 {
    batch.iter().map(|(x, y)| (net.forward(x) - y).powi(2)).sum::<f64>() / batch.len() as f64
}

struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    fn new(net: &Mlp, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            b1: cfg.adam_betas.0,
            b2: cfg.adam_betas.1,
            eps: cfg.adam_epsilon,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    fn step(&mut self, net: &mut Mlp, g: &Gradients) {
        self.t += 1;
        let lr_t = self.lr * (1.0 - self.b2.powi(self.t)).sqrt() / (1.0 - self.b1.powi(self.t));
        let (b1, b2, eps) = (self.b1, self.b2, self.eps);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let groups = [
                (&mut layer.weights, &g.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]),
                (&mut layer.bias, &g.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]),
            ];
            for (p, g, m, v) in groups {
                for k in 0..p.len() {
                    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                    v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                    p[k] -= lr_t * m[k] / (v[k].sqrt() + eps);
                }
            }
        }
    }
}

/// The network `fit` starts from for a given config: the first draws of the
/// seeded stream.
pub fn initial_network(cfg: &TrainConfig, input_width: usize) -> Mlp {
    Mlp::glorot(input_width, &cfg.hidden_sizes, &mut rng::seeded(cfg.seed))
}

/// Train a fresh network with Adam on mean squared error against scaled rewards.
pub fn fit(data: &Dataset, cfg: &TrainConfig, domain: &CategoricalDomain) -> Result<(Mlp, RewardScaler), SurrogateError> {
    cfg.validate()?;
    let scaler = fit_scaler(data)?;
    let samples = one_hot_samples(data, domain, &scaler)?;
    let mut rng = rng::seeded(cfg.seed);
    let mut net = Mlp::glorot(domain.width(), &cfg.hidden_sizes, &mut rng);
    let mut adam = Adam::new(&net, cfg);
    let mut grad = Gradients::zeros_like(&net);
    let mut ws = Workspace::new(&net);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            grad.clear();
            let w = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (active, y) = &samples[i];
                backprop(&net, &Input::OneHot(active), *y, w, &mut grad, &mut ws);
            }
            adam.step(&mut net, &grad);
        }
    }
    Ok((net, scaler))
}

fn one_hot_samples(data: &Dataset, domain: &CategoricalDomain, scaler: &RewardScaler) -> Result<Vec<(Vec<usize>, f64)>, SurrogateError> {
    data.records
        .iter()
        .map(|(p, y)| {
            if p.len() != domain.n() {
                return Err(SurrogateError::DimensionMismatch {
                    expected: domain.n(),
                    got: p.len(),
                });
            }
            domain.validate(p)?;
            Ok((active_indices(domain, p), scaler.apply(*y)))
        })
        .collect()
}

/// Flat indices of the set one-hot bits of `p`.
pub fn active_indices(domain: &CategoricalDomain, p: &Point) -> Vec<usize> {
    p.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| domain.offset(i) + v)
        .collect()
}

/// Training loss (scaled units) of `net` on `data`.
pub fn training_loss(net: &Mlp, scaler: &RewardScaler, data: &Dataset, domain: &CategoricalDomain) -> Result<f64, SurrogateError> {
    let samples = one_hot_samples(data, domain, scaler)?;
    Ok(samples
        .iter()
        .map(|(a, y)| (net.forward_one_hot(a) - y).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
}

/// Forward pass followed by the inverse reward map.
pub fn predict(net: &Mlp, scaler: &RewardScaler, e: &EncodedPoint) -> f64 {
    scaler.inverse(net.forward(&e.as_f64()))
}

/// A trained network together with the reward map it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub net: Mlp,
    pub scaler: RewardScaler,
}

impl Surrogate {
    pub fn train(data: &Dataset, cfg: &TrainConfig, domain: &CategoricalDomain) -> Result<Self, SurrogateError> {
        let (net, scaler) = fit(data, cfg, domain)?;
        Ok(Self { net, scaler })
    }

    /// Network output in scaled units (the acquisition value).
    pub fn scaled(&self, domain: &CategoricalDomain, p: &Point) -> f64 {
        self.net.forward_one_hot(&active_indices(domain, p))
    }

    /// Prediction in raw reward units.
    pub fn predict(&self, domain: &CategoricalDomain, p: &Point) -> f64 {
        self.scaler.inverse(self.scaled(domain, p))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SurrogateError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SurrogateError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            layers: self
                .net
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.rows(),
                    bias: l.bias.clone(),
                })
                .collect(),
            scaler: self.scaler,
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
        if !(file.scaler.scale > 0.0) {
            return Err(SurrogateError::Checkpoint("scaler scale must be positive".into()));
        }
        let layers = file
            .layers
            .into_iter()
            .map(|l| DenseLayer::new(l.weights, l.bias))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            net: Mlp::new(layers)?,
            scaler: file.scaler,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    layers: Vec<LayerFile>,
    scaler: RewardScaler,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}
