//! Feed-forward regression networks trained with mini-batch Adam.
//!
//! A network is a chain of dense layers `a_l = phi(W_l a_{l-1} + b_l)` with
//! rectifier activations on the hidden layers and an identity output layer.
//! The training loss is the sum over outputs of the per-output mean squared
//! error, and gradients are computed by reverse-mode differentiation over a
//! whole mini-batch at once.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScaledData;
use crate::error::{Error, Result};
use crate::io;
use crate::oracle::OUTPUT_DIM;
use crate::rng;
use crate::space::{Scaler, INPUT_DIM};

/// Model file format version.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Width of each hidden layer, input side first.
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    /// A network from the twelve inputs to the six outputs.
    pub fn new(hidden: Vec<usize>) -> Self {
        Architecture {
            input_dim: INPUT_DIM,
            hidden,
            output_dim: OUTPUT_DIM,
        }
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    /// `(fan_in, fan_out)` of every layer including the output layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    pub fn check(&self, bounds: &ArchBounds) -> Result<()> {
        let d = self.depth();
        if d < bounds.min_depth || d > bounds.max_depth {
            return Err(Error::Config(format!(
                "{d} hidden layers outside [{}, {}]",
                bounds.min_depth, bounds.max_depth
            )));
        }
        if let Some(w) = self
            .hidden
            .iter()
            .find(|&&w| w < bounds.min_width || w > bounds.max_width)
        {
            return Err(Error::Config(format!(
                "layer width {w} outside [{}, {}]",
                bounds.min_width, bounds.max_width
            )));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("zero-sized input or output".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let widths: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        write!(f, "[{}]", widths.join(","))
    }
}

/// Inclusive limits on depth and width explored by architecture search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchBounds {
    pub min_depth: usize,
    pub max_depth: usize,
    pub min_width: usize,
    pub max_width: usize,
}

impl Default for ArchBounds {
    fn default() -> Self {
        ArchBounds {
            min_depth: 1,
            max_depth: 10,
            min_width: 2,
            max_width: 64,
        }
    }
}

impl ArchBounds {
    pub fn check(&self) -> Result<()> {
        if self.min_depth == 0
            || self.min_depth > self.max_depth
            || self.min_width == 0
            || self.min_width > self.max_width
        {
            return Err(Error::Config(format!("empty architecture bounds {self:?}")));
        }
        Ok(())
    }
}

/// Dense layer; `weights` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    #[default]
    GlorotUniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn zeros(arch: &Architecture) -> Self {
        Network {
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        }
    }

    pub fn init(arch: &Architecture, init: Init, rng: &mut rng::Rng64) -> Self {
        let mut net = Network::zeros(arch);
        if init == Init::GlorotUniform {
            for layer in &mut net.layers {
                let (fan_out, fan_in) = layer.weights.dim();
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = rng.random_range(-limit..limit));
            }
        }
        net
    }

    pub fn architecture(&self) -> Architecture {
        let n = self.layers.len();
        Architecture {
            input_dim: self.layers[0].weights.ncols(),
            hidden: self.layers[..n - 1].iter().map(|l| l.weights.nrows()).collect(),
            output_dim: self.layers[n - 1].weights.nrows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    fn check_chain(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape {
                context: "network layers",
                expected: 1,
                found: 0,
            });
        }
        for w in self.layers.windows(2) {
            if w[1].weights.ncols() != w[0].weights.nrows() {
                return Err(Error::Shape {
                    context: "layer chain",
                    expected: w[0].weights.nrows(),
                    found: w[1].weights.ncols(),
                });
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::Shape {
                    context: "bias length",
                    expected: l.weights.nrows(),
                    found: l.bias.len(),
                });
            }
        }
        Ok(())
    }

    /// Output for a single scaled input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_chain()?;
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        Ok(self.forward_batch(row).into_raw_vec_and_offset().0)
    }

    /// Row-wise outputs for a batch of scaled inputs (`rows x input_dim`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = affine(x, &self.layers[0]);
        if last > 0 {
            relu(&mut a);
        }
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            a = affine(a.view(), layer);
            if l < last {
                relu(&mut a);
            }
        }
        a
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

fn affine(a: ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = a.dot(&layer.weights.t());
    z += &layer.bias;
    z
}

fn relu(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

/// Per-output mean squared errors and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct MseLoss {
    pub per_output: Vec<f64>,
    pub total: f64,
}

pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<MseLoss> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape {
            context: "loss operands",
            expected: target.len(),
            found: pred.len(),
        });
    }
    let s = pred.nrows();
    if s == 0 || pred.ncols() == 0 {
        return Err(Error::Empty("loss operands"));
    }
    let per_output: Vec<f64> = pred
        .columns()
        .into_iter()
        .zip(target.columns())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s as f64)
        .collect();
    let total = per_output.iter().sum();
    Ok(MseLoss { per_output, total })
}

/// Gradients of the total loss, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Reverse-mode gradients of the total MSE over the batch `(x, y)`.
///
/// The rectifier derivative at exactly zero is taken as zero.
pub fn gradients(net: &Network, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(Gradients, MseLoss)> {
    net.check_chain()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("gradient batch"));
    }
    if x.ncols() != net.input_dim() {
        return Err(Error::Shape {
            context: "batch inputs",
            expected: net.input_dim(),
            found: x.ncols(),
        });
    }
    if y.ncols() != net.output_dim() || y.nrows() != x.nrows() {
        return Err(Error::Shape {
            context: "batch targets",
            expected: net.output_dim() * x.nrows(),
            found: y.len(),
        });
    }

    let last = net.layers.len() - 1;
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let input = if l == 0 { x } else { acts[l - 1].view() };
        let mut a = affine(input, layer);
        if l < last {
            relu(&mut a);
        }
        acts.push(a);
    }
    let pred = &acts[last];
    let loss = mse_loss(pred.view(), y)?;

    let scale = 2.0 / x.nrows() as f64;
    let mut delta = (pred - &y) * scale;
    let mut grads: Vec<Layer> = Vec::with_capacity(net.layers.len());
    for l in (0..=last).rev() {
        let input = if l == 0 { x } else { acts[l - 1].view() };
        let gw = delta.t().dot(&input);
        let gb = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&net.layers[l].weights);
            Zip::from(&mut back)
                .and(&acts[l - 1])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = back;
        }
        grads.push(Layer {
            weights: gw,
            bias: gb,
        });
    }
    grads.reverse();
    Ok((Gradients { layers: grads }, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            seed: 0,
            init: Init::GlorotUniform,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Layer> = net
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.ncols(), l.weights.nrows()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.m.len() != net.layers.len() {
        return Err(Error::Shape {
            context: "adam layers",
            expected: net.layers.len(),
            found: grads.layers.len(),
        });
    }
    for ((p, g), m) in net.layers.iter().zip(&grads.layers).zip(&state.m) {
        if p.weights.dim() != g.weights.dim() || p.weights.dim() != m.weights.dim() || p.bias.len() != g.bias.len() {
            return Err(Error::Shape {
                context: "adam parameters",
                expected: p.weights.len(),
                found: g.weights.len(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (config.learning_rate, config.epsilon);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: Network,
    /// Mean total loss seen over each epoch's mini-batches.
    pub loss_history: Vec<f64>,
}

/// Trains a fresh network on scaled data: seeded initialisation, then
/// `epochs` passes of shuffled mini-batch Adam.
pub fn train(arch: &Architecture, data: &ScaledData, config: &TrainConfig) -> Result<Trained> {
    config.check()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if data.x.ncols() != arch.input_dim || data.y.ncols() != arch.output_dim {
        return Err(Error::Shape {
            context: "training data columns",
            expected: arch.input_dim + arch.output_dim,
            found: data.x.ncols() + data.y.ncols(),
        });
    }
    let n = data.len();
    if n == 1 {
        log::warn!("training on a single sample; using full-batch updates");
    }
    let mut rng = rng::seeded(config.seed);
    let mut net = Network::init(arch, config.init, &mut rng);
    let mut state = AdamState::new(&net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select(chunk);
            let (grads, loss) = gradients(&net, batch.x.view(), batch.y.view())?;
            epoch_loss += loss.total * chunk.len() as f64;
            adam_step(&mut net, &grads, &mut state, config)?;
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() || !net.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss or parameters at epoch {epoch} for architecture {arch}"
            )));
        }
        history.push(epoch_loss);
    }
    Ok(Trained {
        net,
        loss_history: history,
    })
}

/// Serialised dense layer: `W` row-major (`fan_out` rows), `b` of length `fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl From<&Layer> for LayerRecord {
    fn from(l: &Layer) -> Self {
        LayerRecord {
            w: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            b: l.bias.to_vec(),
        }
    }
}

impl TryFrom<&LayerRecord> for Layer {
    type Error = Error;

    fn try_from(r: &LayerRecord) -> Result<Self> {
        let rows = r.w.len();
        let cols = r.w.first().map_or(0, Vec::len);
        if r.w.iter().any(|row| row.len() != cols) {
            return Err(Error::Shape {
                context: "weight matrix rows",
                expected: cols,
                found: r.w.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
            });
        }
        let flat: Vec<f64> = r.w.iter().flatten().copied().collect();
        let weights = Array2::from_shape_vec((rows, cols), flat).map_err(|_| Error::Shape {
            context: "weight matrix",
            expected: rows * cols,
            found: r.w.iter().map(Vec::len).sum(),
        })?;
        Ok(Layer {
            weights,
            bias: Array1::from(r.b.clone()),
        })
    }
}

pub(crate) fn layers_to_records(net: &Network) -> Vec<LayerRecord> {
    net.layers.iter().map(LayerRecord::from).collect()
}

pub(crate) fn records_to_network(records: &[LayerRecord], arch: &Architecture) -> Result<Network> {
    let net = Network {
        layers: records.iter().map(Layer::try_from).collect::<Result<_>>()?,
    };
    net.check_chain()?;
    if &net.architecture() != arch {
        return Err(Error::Config(format!(
            "stored layers {} do not match architecture {arch}",
            net.architecture()
        )));
    }
    Ok(net)
}

/// Single-network model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    pub architecture: Architecture,
    pub scaler: Scaler,
    pub layers: Vec<LayerRecord>,
}

pub fn save_network(path: &Path, net: &Network, scaler: &Scaler) -> Result<()> {
    io::write_json(
        path,
        &NetworkFile {
            version: MODEL_VERSION,
            architecture: net.architecture(),
            scaler: scaler.clone(),
            layers: layers_to_records(net),
        },
    )
}

pub fn load_network(path: &Path) -> Result<(Network, Scaler)> {
    let file: NetworkFile = io::read_json(path)?;
    if file.version != MODEL_VERSION {
        return Err(Error::Config(format!(
            "{}: unsupported model version {}",
            path.display(),
            file.version
        )));
    }
    let net = records_to_network(&file.layers, &file.architecture)?;
    Ok((net, file.scaler))
}
