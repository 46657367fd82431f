//! The two fixed architectures.
//!
//! Both models are a flat stack of [`Layer`]s operating on batches laid out
//! `[batch, time, channel]`. A training forward pass keeps a record of the
//! activations each layer needs; [`Model::backward`] consumes that record,
//! so a second backward without a new forward is rejected.

mod checkpoint;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::ops::{self, DirectionCache, Mode, OutLayout};
use crate::tensor::{Parameter, Real, Tensor};
use crate::{seed, N_CHANNELS, N_CLASSES, SEGMENT_LEN};

const CNN_KERNEL: usize = 3;
const CNN_FILTERS: [usize; 2] = [64, 128];
const CNN_DENSE: usize = 128;
const LSTM_HIDDEN: usize = 64;
const LSTM_DENSE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Bilstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Bilstm => "bilstm",
        }
    }

    pub fn default_dropout(self) -> f64 {
        match self {
            ModelKind::Cnn => 0.4,
            ModelKind::Bilstm => 0.5,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" | "1d-cnn" => Ok(ModelKind::Cnn),
            "bilstm" => Ok(ModelKind::Bilstm),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Time points per input sample.
    pub seq_len: usize,
    /// Channels (regions) per time point.
    pub channels: usize,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        ModelConfig {
            kind,
            dropout_rate: kind.default_dropout(),
            seed,
            seq_len: SEGMENT_LEN,
            channels: N_CHANNELS,
        }
    }

    pub fn with_input(mut self, seq_len: usize, channels: usize) -> Self {
        self.seq_len = seq_len;
        self.channels = channels;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.channels == 0 || self.seq_len == 0 {
            return Err(Error::Config("model input must be non-empty".into()));
        }
        if self.kind == ModelKind::Cnn && self.seq_len < 4 {
            return Err(Error::Config(format!(
                "the CNN pools twice and needs at least 4 time points, got {}",
                self.seq_len
            )));
        }
        Ok(())
    }
}

/// One row of a model summary; `output_shape` omits the batch dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub layers: Vec<LayerSummary>,
    pub total_params: usize,
}

impl ModelSummary {
    pub fn param_column(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.params).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activation {
    Relu,
    Softmax,
}

#[derive(Debug, Clone)]
enum Layer {
    Input {
        len: usize,
        channels: usize,
    },
    /// Same-padded convolution followed by ReLU.
    Conv1d {
        weight: Parameter,
        bias: Parameter,
        len: usize,
        cin: usize,
        cout: usize,
    },
    Dropout {
        rate: Real,
        out_shape: Vec<usize>,
    },
    MaxPool {
        len_in: usize,
        channels: usize,
    },
    Flatten {
        size: usize,
    },
    Dense {
        weight: Parameter,
        bias: Parameter,
        n: usize,
        m: usize,
        activation: Activation,
    },
    BiLstm {
        fwd_weight: Parameter,
        fwd_bias: Parameter,
        bwd_weight: Parameter,
        bwd_bias: Parameter,
        len: usize,
        cin: usize,
        hidden: usize,
    },
}

impl Layer {
    fn name(&self) -> String {
        match self {
            Layer::Input { .. } => "InputLayer".into(),
            Layer::Conv1d { .. } => "Conv1D (ReLU)".into(),
            Layer::Dropout { rate, .. } => format!("Dropout ({rate})"),
            Layer::MaxPool { .. } => "MaxPooling1D".into(),
            Layer::Flatten { .. } => "Flatten".into(),
            Layer::Dense {
                activation: Activation::Relu,
                ..
            } => "Fully Connected Layer (ReLU)".into(),
            Layer::Dense {
                activation: Activation::Softmax,
                ..
            } => "Output Layer (SoftMax)".into(),
            Layer::BiLstm { .. } => "Bidirectional (tanh/sigmoid)".into(),
        }
    }

    fn out_shape(&self) -> Vec<usize> {
        match self {
            Layer::Input { len, channels } => vec![*len, *channels],
            Layer::Conv1d { len, cout, .. } => vec![*len, *cout],
            Layer::Dropout { out_shape, .. } => out_shape.clone(),
            Layer::MaxPool { len_in, channels } => vec![len_in / 2, *channels],
            Layer::Flatten { size } => vec![*size],
            Layer::Dense { m, .. } => vec![*m],
            Layer::BiLstm { len, hidden, .. } => vec![*len, 2 * hidden],
        }
    }

    fn params(&self) -> Vec<&Parameter> {
        match self {
            Layer::Conv1d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => vec![weight, bias],
            Layer::BiLstm {
                fwd_weight,
                fwd_bias,
                bwd_weight,
                bwd_bias,
                ..
            } => vec![fwd_weight, fwd_bias, bwd_weight, bwd_bias],
            _ => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Conv1d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => vec![weight, bias],
            Layer::BiLstm {
                fwd_weight,
                fwd_bias,
                bwd_weight,
                bwd_bias,
                ..
            } => vec![fwd_weight, fwd_bias, bwd_weight, bwd_bias],
            _ => vec![],
        }
    }
}

/// Activations a layer keeps for its backward pass.
enum Cache {
    Empty,
    Conv { input: Vec<Real>, output: Vec<Real> },
    Dropout { mask: Option<Vec<Real>> },
    Pool { argmax: Vec<u32> },
    Dense { input: Vec<Real>, output: Vec<Real> },
    BiLstm {
        input: Vec<Real>,
        output: Vec<Real>,
        fwd: DirectionCache,
        bwd: DirectionCache,
    },
}

struct ForwardRecord {
    generation: u64,
    batch: usize,
    caches: Vec<Cache>,
    labels: Vec<usize>,
    probs: Vec<Real>,
    class_weights: Option<Vec<Real>>,
}

/// Scalar loss produced by [`Model::forward_loss`]; the handle that
/// [`Model::backward`] accepts.
#[derive(Debug, Clone)]
pub struct LossNode {
    pub value: Real,
    pub probs: Tensor,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[batch, classes]` softmax outputs.
    pub probs: Tensor,
    pub labels: Vec<usize>,
}

/// Anything that maps a `[batch, time, channel]` tensor to class labels.
pub trait Classifier {
    /// `(time points, channels)` expected per sample.
    fn input_shape(&self) -> (usize, usize);
    fn predict_labels(&self, batch: &Tensor) -> Result<Vec<usize>>;
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
    record: Option<ForwardRecord>,
    generation: u64,
}

impl Clone for Model {
    /// Clones weights and configuration; any pending forward record is not
    /// carried over.
    fn clone(&self) -> Self {
        Model {
            config: self.config.clone(),
            layers: self.layers.clone(),
            record: None,
            generation: 0,
        }
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("layers", &self.layers.iter().map(Layer::name).collect::<Vec<_>>())
            .finish()
    }
}

fn glorot(name: &str, shape: &[usize], fan_in: usize, fan_out: usize, base: u64, tag: u64) -> Parameter {
    use rand::Rng;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = seed::rng(base, &[tag]);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit) as Real).collect();
    Parameter::new(name, Tensor::from_vec(shape, data).expect("shape product"))
}

fn zeros(name: &str, shape: &[usize]) -> Parameter {
    Parameter::new(name, Tensor::zeros(shape))
}

fn lstm_params(prefix: &str, cin: usize, h: usize, base: u64, tag: u64) -> (Parameter, Parameter) {
    use rand::Rng;
    let limit = 1.0 / ((cin + h) as f64).sqrt();
    let mut rng = seed::rng(base, &[tag]);
    let data = (0..(cin + h) * 4 * h)
        .map(|_| rng.random_range(-limit..limit) as Real)
        .collect();
    let weight = Parameter::new(
        format!("{prefix}.weight"),
        Tensor::from_vec(&[cin + h, 4 * h], data).expect("shape product"),
    );
    let mut bias = vec![0.0; 4 * h];
    bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
    let bias = Parameter::new(
        format!("{prefix}.bias"),
        Tensor::from_vec(&[4 * h], bias).expect("shape product"),
    );
    (weight, bias)
}

/// 1D-CNN: two conv/dropout/pool blocks, a ReLU dense layer and a softmax
/// output.
pub fn build_cnn(config: ModelConfig) -> Result<Model> {
    if config.kind != ModelKind::Cnn {
        return Err(Error::Config("build_cnn called with a non-CNN config".into()));
    }
    config.validate()?;
    let (t, c) = (config.seq_len, config.channels);
    let rate = config.dropout_rate as Real;
    let s = config.seed;
    let [f1, f2] = CNN_FILTERS;
    let k = CNN_KERNEL;
    let t1 = t / 2;
    let t2 = t1 / 2;
    let flat = t2 * f2;
    let layers = vec![
        Layer::Input { len: t, channels: c },
        Layer::Conv1d {
            weight: glorot("conv1.weight", &[k, c, f1], k * c, k * f1, s, 1),
            bias: zeros("conv1.bias", &[f1]),
            len: t,
            cin: c,
            cout: f1,
        },
        Layer::Dropout {
            rate,
            out_shape: vec![t, f1],
        },
        Layer::MaxPool { len_in: t, channels: f1 },
        Layer::Conv1d {
            weight: glorot("conv2.weight", &[k, f1, f2], k * f1, k * f2, s, 2),
            bias: zeros("conv2.bias", &[f2]),
            len: t1,
            cin: f1,
            cout: f2,
        },
        Layer::Dropout {
            rate,
            out_shape: vec![t1, f2],
        },
        Layer::MaxPool { len_in: t1, channels: f2 },
        Layer::Flatten { size: flat },
        Layer::Dense {
            weight: glorot("dense1.weight", &[flat, CNN_DENSE], flat, CNN_DENSE, s, 3),
            bias: zeros("dense1.bias", &[CNN_DENSE]),
            n: flat,
            m: CNN_DENSE,
            activation: Activation::Relu,
        },
        Layer::Dropout {
            rate,
            out_shape: vec![CNN_DENSE],
        },
        Layer::Dense {
            weight: glorot("output.weight", &[CNN_DENSE, N_CLASSES], CNN_DENSE, N_CLASSES, s, 4),
            bias: zeros("output.bias", &[N_CLASSES]),
            n: CNN_DENSE,
            m: N_CLASSES,
            activation: Activation::Softmax,
        },
    ];
    Ok(Model::from_layers(config, layers))
}

/// BiLSTM: one bidirectional layer (64 units per direction), flatten,
/// dropout, a ReLU dense layer, dropout and a softmax output.
pub fn build_bilstm(config: ModelConfig) -> Result<Model> {
    if config.kind != ModelKind::Bilstm {
        return Err(Error::Config("build_bilstm called with a non-BiLSTM config".into()));
    }
    config.validate()?;
    let (t, c) = (config.seq_len, config.channels);
    let rate = config.dropout_rate as Real;
    let s = config.seed;
    let h = LSTM_HIDDEN;
    let flat = t * 2 * h;
    let (fw, fb) = lstm_params("lstm_fwd", c, h, s, 1);
    let (bw, bb) = lstm_params("lstm_bwd", c, h, s, 2);
    let layers = vec![
        Layer::Input { len: t, channels: c },
        Layer::BiLstm {
            fwd_weight: fw,
            fwd_bias: fb,
            bwd_weight: bw,
            bwd_bias: bb,
            len: t,
            cin: c,
            hidden: h,
        },
        Layer::Flatten { size: flat },
        Layer::Dropout {
            rate,
            out_shape: vec![flat],
        },
        Layer::Dense {
            weight: glorot("dense1.weight", &[flat, LSTM_DENSE], flat, LSTM_DENSE, s, 3),
            bias: zeros("dense1.bias", &[LSTM_DENSE]),
            n: flat,
            m: LSTM_DENSE,
            activation: Activation::Relu,
        },
        Layer::Dropout {
            rate,
            out_shape: vec![LSTM_DENSE],
        },
        Layer::Dense {
            weight: glorot("output.weight", &[LSTM_DENSE, N_CLASSES], LSTM_DENSE, N_CLASSES, s, 4),
            bias: zeros("output.bias", &[N_CLASSES]),
            n: LSTM_DENSE,
            m: N_CLASSES,
            activation: Activation::Softmax,
        },
    ];
    Ok(Model::from_layers(config, layers))
}

impl Model {
    pub fn build(config: ModelConfig) -> Result<Model> {
        match config.kind {
            ModelKind::Cnn => build_cnn(config),
            ModelKind::Bilstm => build_bilstm(config),
        }
    }

    fn from_layers(config: ModelConfig, layers: Vec<Layer>) -> Model {
        Model {
            config,
            layers,
            record: None,
            generation: 0,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn summary(&self) -> ModelSummary {
        let layers: Vec<LayerSummary> = self
            .layers
            .iter()
            .map(|l| LayerSummary {
                name: l.name(),
                output_shape: l.out_shape(),
                params: l.params().iter().map(|p| p.numel()).sum(),
            })
            .collect();
        let total_params = layers.iter().map(|l| l.params).sum();
        ModelSummary {
            kind: self.config.kind,
            layers,
            total_params,
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters().into_iter().find(|p| p.name == name)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.parameters_mut().into_iter().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.tensor.zero_grad();
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (t, c) = (self.config.seq_len, self.config.channels);
        match *x.shape() {
            [b, tt, cc] => {
                if tt != t {
                    return Err(Error::shape("model input", "time points", t, tt));
                }
                if cc != c {
                    return Err(Error::shape("model input", "channels", c, cc));
                }
                if b == 0 {
                    return Err(Error::InvalidArgument("empty batch".into()));
                }
                Ok(b)
            }
            _ => Err(Error::shape("model input", "rank", 3, x.shape().len())),
        }
    }

    /// Runs every layer. When `caches` is given each layer pushes what its
    /// backward pass needs.
    fn run(
        &self,
        x: &Tensor,
        mode: Mode,
        mut rng: Option<&mut dyn RngCore>,
        mut caches: Option<&mut Vec<Cache>>,
    ) -> Result<Vec<Real>> {
        let b = self.check_input(x)?;
        let mut act = x.data().to_vec();
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Input { .. } => (act, Cache::Empty),
                Layer::Conv1d {
                    weight,
                    bias,
                    len,
                    cin,
                    cout,
                } => {
                    let ksize = weight.tensor.shape()[0];
                    let mut out = vec![0.0; b * len * cout];
                    for (xs, os) in act.chunks_exact(len * cin).zip(out.chunks_exact_mut(len * cout)) {
                        ops::conv1d_forward(xs, *len, *cin, weight.tensor.data(), ksize, *cout, bias.tensor.data(), os);
                    }
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                    if caches.is_some() {
                        let output = out.clone();
                        (out, Cache::Conv { input: act, output })
                    } else {
                        (out, Cache::Empty)
                    }
                }
                Layer::Dropout { rate, .. } => {
                    if mode == Mode::Eval || *rate == 0.0 {
                        (act, Cache::Dropout { mask: None })
                    } else {
                        let rng = rng
                            .as_deref_mut()
                            .ok_or_else(|| Error::InvalidArgument("training-mode dropout needs an rng".into()))?;
                        let mask = ops::dropout_mask(act.len(), *rate, rng);
                        let out = act.iter().zip(&mask).map(|(a, m)| a * m).collect();
                        (out, Cache::Dropout { mask: Some(mask) })
                    }
                }
                Layer::MaxPool { len_in, channels } => {
                    let tout = len_in / 2;
                    let mut out = vec![0.0; b * tout * channels];
                    let mut argmax = vec![0u32; out.len()];
                    for ((xs, os), is) in act
                        .chunks_exact(len_in * channels)
                        .zip(out.chunks_exact_mut(tout * channels))
                        .zip(argmax.chunks_exact_mut(tout * channels))
                    {
                        ops::maxpool_forward(xs, *len_in, *channels, os, is);
                    }
                    (out, Cache::Pool { argmax })
                }
                Layer::Flatten { .. } => (act, Cache::Empty),
                Layer::Dense {
                    weight,
                    bias,
                    n,
                    m,
                    activation,
                } => {
                    let mut out = vec![0.0; b * m];
                    ops::dense_forward(&act, b, *n, weight.tensor.data(), *m, bias.tensor.data(), &mut out);
                    match activation {
                        Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(0.0)),
                        Activation::Softmax => ops::softmax_rows_inplace(&mut out, *m),
                    }
                    if caches.is_some() {
                        let output = out.clone();
                        (out, Cache::Dense { input: act, output })
                    } else {
                        (out, Cache::Empty)
                    }
                }
                Layer::BiLstm {
                    fwd_weight,
                    fwd_bias,
                    bwd_weight,
                    bwd_bias,
                    len,
                    cin,
                    hidden,
                } => {
                    let width = 2 * hidden;
                    let mut out = vec![0.0; b * len * width];
                    let fwd = ops::lstm_direction_forward(
                        &act,
                        b,
                        *len,
                        *cin,
                        fwd_weight.tensor.data(),
                        fwd_bias.tensor.data(),
                        *hidden,
                        false,
                        &mut out,
                        OutLayout { width, offset: 0 },
                    );
                    let bwd = ops::lstm_direction_forward(
                        &act,
                        b,
                        *len,
                        *cin,
                        bwd_weight.tensor.data(),
                        bwd_bias.tensor.data(),
                        *hidden,
                        true,
                        &mut out,
                        OutLayout {
                            width,
                            offset: *hidden,
                        },
                    );
                    if caches.is_some() {
                        let output = out.clone();
                        (
                            out,
                            Cache::BiLstm {
                                input: act,
                                output,
                                fwd,
                                bwd,
                            },
                        )
                    } else {
                        (out, Cache::Empty)
                    }
                }
            };
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
            act = next;
        }
        if act.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model forward pass".into()));
        }
        Ok(act)
    }

    /// Evaluation-mode class probabilities, `[batch, 6]`.
    pub fn forward_probs(&self, x: &Tensor) -> Result<Tensor> {
        let b = self.check_input(x)?;
        let probs = self.run(x, Mode::Eval, None, None)?;
        Tensor::from_vec(&[b, N_CLASSES], probs)
    }

    /// Evaluation-mode prediction; labels are the argmax with lowest-index
    /// tie-break.
    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        let probs = self.forward_probs(x)?;
        let labels = probs.data().chunks_exact(N_CLASSES).map(argmax).collect();
        Ok(Prediction { probs, labels })
    }

    /// Forward pass that records activations and returns the mean
    /// cross-entropy against `labels`.
    pub fn forward_loss(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        mode: Mode,
        rng: &mut dyn RngCore,
        class_weights: Option<&[Real]>,
    ) -> Result<LossNode> {
        let b = self.check_input(x)?;
        if labels.len() != b {
            return Err(Error::shape("forward_loss", "label count", b, labels.len()));
        }
        self.record = None;
        let mut caches = Vec::with_capacity(self.layers.len());
        let probs = self.run(x, mode, Some(rng), Some(&mut caches))?;
        let probs_t = Tensor::from_vec(&[b, N_CLASSES], probs.clone())?;
        let value = ops::weighted_cross_entropy_loss(&probs_t, labels, class_weights)?;
        self.generation += 1;
        self.record = Some(ForwardRecord {
            generation: self.generation,
            batch: b,
            caches,
            labels: labels.to_vec(),
            probs,
            class_weights: class_weights.map(<[Real]>::to_vec),
        });
        Ok(LossNode {
            value,
            probs: probs_t,
            generation: self.generation,
        })
    }

    /// Accumulates `d loss / d param` into every parameter's gradient buffer.
    pub fn backward(&mut self, loss: &LossNode) -> Result<()> {
        let record = match self.record.take() {
            Some(r) if r.generation == loss.generation => r,
            Some(r) => {
                self.record = Some(r);
                return Err(Error::NoForwardRecord);
            }
            None => return Err(Error::NoForwardRecord),
        };
        let b = record.batch;
        let mut grad = ops::cross_entropy_backward(
            &record.probs,
            &record.labels,
            N_CLASSES,
            record.class_weights.as_deref(),
        );
        for (idx, (layer, cache)) in self.layers.iter_mut().zip(record.caches).enumerate().rev() {
            // The layer right after the input does not need an input gradient.
            let need_dx = idx > 1;
            grad = match (layer, cache) {
                (Layer::Input { .. }, _) | (Layer::Flatten { .. }, _) => grad,
                (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                    if let Some(mask) = mask {
                        grad.iter_mut().zip(&mask).for_each(|(g, m)| *g *= m);
                    }
                    grad
                }
                (Layer::MaxPool { len_in, channels }, Cache::Pool { argmax }) => {
                    let tout = *len_in / 2;
                    let mut dx = vec![0.0; b * *len_in * *channels];
                    for ((gs, is), ds) in grad
                        .chunks_exact(tout * *channels)
                        .zip(argmax.chunks_exact(tout * *channels))
                        .zip(dx.chunks_exact_mut(*len_in * *channels))
                    {
                        ops::maxpool_backward(gs, *channels, is, ds);
                    }
                    dx
                }
                (
                    Layer::Dense {
                        weight,
                        bias,
                        n,
                        m,
                        activation,
                    },
                    Cache::Dense { input, output },
                ) => {
                    match activation {
                        Activation::Relu => ops::relu_backward_inplace(&output, &mut grad),
                        Activation::Softmax => ops::softmax_backward_rows(&output, &mut grad, *m),
                    }
                    let mut dx = need_dx.then(|| vec![0.0; b * *n]);
                    bias.tensor.ensure_grad();
                    weight.tensor.ensure_grad();
                    let db = bias.tensor.grad_mut().expect("allocated");
                    let (w, dw) = weight.tensor.data_and_grad_mut();
                    ops::dense_backward(&input, b, *n, w, *m, &grad, dx.as_deref_mut(), dw.expect("allocated"), db);
                    dx.unwrap_or_default()
                }
                (
                    Layer::Conv1d {
                        weight,
                        bias,
                        len,
                        cin,
                        cout,
                    },
                    Cache::Conv { input, output },
                ) => {
                    ops::relu_backward_inplace(&output, &mut grad);
                    let (len, cin, cout) = (*len, *cin, *cout);
                    let ksize = weight.tensor.shape()[0];
                    let mut dx = need_dx.then(|| vec![0.0; b * len * cin]);
                    bias.tensor.ensure_grad();
                    weight.tensor.ensure_grad();
                    let db = bias.tensor.grad_mut().expect("allocated");
                    let (w, dw) = weight.tensor.data_and_grad_mut();
                    let dw = dw.expect("allocated");
                    for s in 0..b {
                        let xs = &input[s * len * cin..(s + 1) * len * cin];
                        let gs = &grad[s * len * cout..(s + 1) * len * cout];
                        let dxs = dx.as_deref_mut().map(|d| &mut d[s * len * cin..(s + 1) * len * cin]);
                        ops::conv1d_backward(xs, len, cin, w, ksize, cout, gs, dxs, dw, db);
                    }
                    dx.unwrap_or_default()
                }
                (
                    Layer::BiLstm {
                        fwd_weight,
                        fwd_bias,
                        bwd_weight,
                        bwd_bias,
                        len,
                        cin,
                        hidden,
                    },
                    Cache::BiLstm {
                        input,
                        output,
                        fwd,
                        bwd,
                    },
                ) => {
                    let width = 2 * *hidden;
                    let mut dx = need_dx.then(|| vec![0.0; b * *len * *cin]);
                    for (weight, bias, cache, reverse, offset) in [
                        (fwd_weight, fwd_bias, &fwd, false, 0),
                        (bwd_weight, bwd_bias, &bwd, true, *hidden),
                    ] {
                        bias.tensor.ensure_grad();
                        weight.tensor.ensure_grad();
                        let db = bias.tensor.grad_mut().expect("allocated");
                        let (w, dw) = weight.tensor.data_and_grad_mut();
                        ops::lstm_direction_backward(
                            &input,
                            b,
                            *len,
                            *cin,
                            w,
                            *hidden,
                            reverse,
                            &output,
                            OutLayout { width, offset },
                            cache,
                            &grad,
                            dx.as_deref_mut(),
                            dw.expect("allocated"),
                            db,
                        );
                    }
                    dx.unwrap_or_default()
                }
                _ => unreachable!("cache kind always matches its layer"),
            };
        }
        Ok(())
    }
}

impl Classifier for Model {
    fn input_shape(&self) -> (usize, usize) {
        (self.config.seq_len, self.config.channels)
    }

    fn predict_labels(&self, batch: &Tensor) -> Result<Vec<usize>> {
        Ok(self.predict(batch)?.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cnn() -> Model {
        build_cnn(ModelConfig::new(ModelKind::Cnn, 1).with_input(8, 3)).unwrap()
    }

    fn random_batch(b: usize, t: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..b * t * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(&[b, t, c], data).unwrap()
    }

    #[test]
    fn cnn_summary_matches_table() {
        let m = build_cnn(ModelConfig::new(ModelKind::Cnn, 0)).unwrap();
        let s = m.summary();
        assert_eq!(
            s.param_column(),
            vec![0, 41_152, 0, 0, 24_704, 0, 0, 0, 1_130_624, 0, 774]
        );
        let shapes: Vec<Vec<usize>> = s.layers.iter().map(|l| l.output_shape.clone()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![277, 214],
                vec![277, 64],
                vec![277, 64],
                vec![138, 64],
                vec![138, 128],
                vec![138, 128],
                vec![69, 128],
                vec![8832],
                vec![128],
                vec![128],
                vec![6],
            ]
        );
        assert_eq!(s.layers[2].name, "Dropout (0.4)");
        assert_eq!(s.total_params, 41_152 + 24_704 + 1_130_624 + 774);
    }

    #[test]
    fn kernel_size_solves_parameter_equation() {
        let k: Vec<usize> = (1..10).filter(|k| k * 214 * 64 + 64 == 41_152).collect();
        assert_eq!(k, vec![CNN_KERNEL]);
    }

    #[test]
    fn bilstm_summary_matches_table() {
        let m = build_bilstm(ModelConfig::new(ModelKind::Bilstm, 0)).unwrap();
        let s = m.summary();
        assert_eq!(s.param_column(), vec![0, 142_848, 0, 0, 2_269_248, 0, 390]);
        assert_eq!(s.layers[1].output_shape, vec![277, 128]);
        assert_eq!(s.layers[2].output_shape, vec![35_456]);
        assert_eq!(s.layers[3].name, "Dropout (0.5)");
        let h: Vec<usize> = (1..200)
            .filter(|h| 2 * 4 * ((214 + h) * h + h) == 142_848)
            .collect();
        assert_eq!(h, vec![LSTM_HIDDEN]);
    }

    #[test]
    fn probabilities_sum_to_one_and_are_deterministic() {
        let m = small_cnn();
        let x = random_batch(4, 8, 3, 2);
        let a = m.predict(&x).unwrap();
        let b = m.predict(&x).unwrap();
        assert_eq!(a, b);
        for row in a.probs.data().chunks_exact(N_CLASSES) {
            assert!((row.iter().sum::<Real>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_prediction_ignores_dropout_rate() {
        let x = random_batch(3, 8, 3, 5);
        let base = ModelConfig::new(ModelKind::Cnn, 9).with_input(8, 3);
        let a = build_cnn(base.clone().with_dropout(0.0)).unwrap();
        let b = build_cnn(base.with_dropout(0.9)).unwrap();
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn constant_model_predicts_planted_class() {
        let mut m = small_cnn();
        for p in m.parameters_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        m.parameter_mut("output.bias").unwrap().tensor.data_mut()[2] = 1.0;
        let pred = m.predict(&random_batch(5, 8, 3, 3)).unwrap();
        assert_eq!(pred.labels, vec![2; 5]);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0; 6]), 0);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let m = small_cnn();
        assert!(matches!(
            m.predict(&Tensor::zeros(&[2, 8, 4])),
            Err(Error::Shape { dim: "channels", .. })
        ));
        assert!(m.predict(&Tensor::zeros(&[8, 3])).is_err());
    }

    #[test]
    fn backward_requires_a_fresh_forward() {
        let mut m = small_cnn();
        let x = random_batch(2, 8, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = m.forward_loss(&x, &[0, 1], Mode::Train, &mut rng, None).unwrap();
        m.backward(&loss).unwrap();
        assert!(matches!(m.backward(&loss), Err(Error::NoForwardRecord)));
        let stale = loss;
        let _fresh = m.forward_loss(&x, &[0, 1], Mode::Train, &mut rng, None).unwrap();
        assert!(matches!(m.backward(&stale), Err(Error::NoForwardRecord)));
    }

    #[test]
    fn fresh_model_has_no_forward_record() {
        let mut m = small_cnn();
        let mut other = small_cnn();
        let x = random_batch(1, 8, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = other.forward_loss(&x, &[0], Mode::Eval, &mut rng, None).unwrap();
        assert!(m.backward(&loss).is_err());
    }

    #[test]
    fn parameter_names_are_unique() {
        for kind in [ModelKind::Cnn, ModelKind::Bilstm] {
            let m = Model::build(ModelConfig::new(kind, 0).with_input(8, 3)).unwrap();
            let mut names: Vec<_> = m.parameters().iter().map(|p| p.name.clone()).collect();
            let n = names.len();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), n);
        }
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let m = build_bilstm(ModelConfig::new(ModelKind::Bilstm, 0).with_input(4, 3)).unwrap();
        let b = m.parameter("lstm_fwd.bias").unwrap().tensor.data();
        assert!(b[..64].iter().all(|&v| v == 0.0));
        assert!(b[64..128].iter().all(|&v| v == 1.0));
        assert!(b[128..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = small_cnn();
        let b = small_cnn();
        let c = build_cnn(ModelConfig::new(ModelKind::Cnn, 2).with_input(8, 3)).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_ne!(a.parameters(), c.parameters());
    }
}
