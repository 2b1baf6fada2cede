//! Feedforward network regressor: tanh hidden layers, linear output, mean
//! squared error, reverse-mode gradients and Adam with mini-batches and
//! early stopping on the training loss.

use crate::error::{Error, Result};
use crate::fingerprint::NormStats;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }

    /// Multiply `grad` by the activation derivative, expressed through the
    /// activation output `a`.
    fn backprop(self, grad: &mut Array2<f64>, a: &Array2<f64>) {
        if self == Activation::Tanh {
            Zip::from(grad).and(a).for_each(|g, &a| *g *= 1.0 - a * a);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpArchitecture {
    /// Tanh hidden layers and a linear two-dimensional output.
    pub fn regressor(input_dim: usize, hidden_layers: &[usize]) -> Self {
        MlpArchitecture {
            input_dim,
            hidden_layers: hidden_layers.to_vec(),
            output_dim: 2,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidArgument(format!("zero-width layer in {}", self.summary())));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_layers);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn summary(&self) -> String {
        let mut parts = vec![self.input_dim.to_string()];
        parts.extend(self.hidden_layers.iter().map(usize::to_string));
        parts.push(self.output_dim.to_string());
        parts.join("-")
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.hidden_layers.len() + 1 {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// One affine layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds.
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub architecture: MlpArchitecture,
    pub layers: Vec<Layer>,
    pub training_log: TrainingLog,
    /// Present when the network was trained on standardized labels; outputs
    /// are mapped back to meters by [`predict`].
    pub label_scaling: Option<NormStats>,
}

pub type Gradients = Vec<Layer>;

/// Weights uniform in `±1/sqrt(fan_in)`, zero biases.
pub fn init_model(arch: &MlpArchitecture, seed: u64) -> Result<MlpModel> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let limit = 1.0 / (fan_in as f64).sqrt();
            Layer {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..=limit)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel {
        architecture: arch.clone(),
        layers,
        training_log: TrainingLog::default(),
        label_scaling: None,
    })
}

fn check_input(model: &MlpModel, batch: ArrayView2<f64>) -> Result<()> {
    if batch.ncols() != model.architecture.input_dim {
        return Err(Error::shape(
            format!("{} input columns", model.architecture.input_dim),
            format!("{} columns", batch.ncols()),
        ));
    }
    Ok(())
}

/// Activations of every layer, input first.
fn forward_all(model: &MlpModel, batch: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    acts.push(batch.to_owned());
    for (l, layer) in model.layers.iter().enumerate() {
        let mut z = acts[l].dot(&layer.weights);
        z += &layer.bias;
        model.architecture.activation(l).apply(&mut z);
        acts.push(z);
    }
    acts
}

/// Network output for every row of `batch` (in training-label units).
pub fn forward(model: &MlpModel, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(model, batch)?;
    let mut a = batch.to_owned();
    for (l, layer) in model.layers.iter().enumerate() {
        let mut z = a.dot(&layer.weights);
        z += &layer.bias;
        model.architecture.activation(l).apply(&mut z);
        a = z;
    }
    Ok(a)
}

/// Mean over all entries of the squared difference.
pub fn loss_mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("loss input"));
    }
    let sum: f64 = Zip::from(pred).and(target).fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    Ok(sum / pred.len() as f64)
}

/// Exact gradient of [`loss_mse`] with respect to every weight and bias.
pub fn backward(model: &MlpModel, batch: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Gradients> {
    check_input(model, batch)?;
    if target.nrows() != batch.nrows() || target.ncols() != model.architecture.output_dim {
        return Err(Error::shape(
            format!("({}, {})", batch.nrows(), model.architecture.output_dim),
            format!("{:?}", target.dim()),
        ));
    }
    if batch.nrows() == 0 {
        return Err(Error::Empty("batch"));
    }
    Ok(gradients(model, &forward_all(model, batch), target))
}

fn gradients(model: &MlpModel, acts: &[Array2<f64>], target: ArrayView2<f64>) -> Gradients {
    let n_layers = model.layers.len();
    let out = &acts[n_layers];
    let mut delta = (out - &target) * (2.0 / out.len() as f64);
    model.architecture.activation(n_layers - 1).backprop(&mut delta, out);
    let mut grads: Vec<Layer> = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        let weights = acts[l].t().dot(&delta);
        let bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut next = delta.dot(&model.layers[l].weights.t());
            model.architecture.activation(l - 1).backprop(&mut next, &acts[l]);
            delta = next;
        }
        grads.push(Layer { weights, bias });
    }
    grads.reverse();
    grads
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopping {
    /// Epochs without an improvement larger than `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { patience: 20, min_delta: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub early_stop: EarlyStopping,
    /// Standardize labels with training statistics before fitting.
    pub normalize_labels: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 500,
            adam: AdamConfig::default(),
            early_stop: EarlyStopping::default(),
            normalize_labels: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.early_stop.patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        if !(self.adam.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be non-negative".into()));
        }
        Ok(())
    }
}

struct Adam {
    config: AdamConfig,
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Adam {
    fn new(config: AdamConfig, layers: &[Layer]) -> Self {
        Adam {
            config,
            m: layers.iter().map(Layer::zeros_like).collect(),
            v: layers.iter().map(Layer::zeros_like).collect(),
            step: 0,
        }
    }

    fn update(&mut self, layers: &mut [Layer], grads: &[Layer]) {
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let rule = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        };
        for (((layer, g), m), v) in layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| rule(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| rule(p, m, v, g));
        }
    }
}

/// Fit `model` to `(features, labels)`.
///
/// `features` must already be normalized; labels are in meters (they are
/// standardized internally when `config.normalize_labels` is set). Every
/// epoch visits the rows in a fresh seeded order in mini-batches, then the
/// loss over the whole training set is recorded. Training ends after
/// `max_epochs` or once `patience` epochs pass without an improvement larger
/// than `min_delta`; the returned parameters are those of the lowest-loss
/// epoch.
pub fn train(
    mut model: MlpModel,
    features: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    config: &TrainConfig,
) -> Result<MlpModel> {
    config.validate()?;
    check_input(&model, features)?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if labels.dim() != (n, model.architecture.output_dim) {
        return Err(Error::shape(
            format!("({n}, {})", model.architecture.output_dim),
            format!("{:?}", labels.dim()),
        ));
    }
    let (targets, scaling) = if config.normalize_labels {
        let stats = NormStats::from_all(labels);
        (stats.normalize(labels)?, Some(stats))
    } else {
        (labels.to_owned(), None)
    };
    model.label_scaling = scaling;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.adam.clone(), &model.layers);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainingLog::default();
    let mut best_layers = model.layers.clone();
    let mut best_loss = f64::INFINITY;
    let mut reference = f64::INFINITY;
    let mut since_improvement = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let x = features.select(Axis(0), chunk);
            let y = targets.select(Axis(0), chunk);
            let acts = forward_all(&model, x.view());
            let grads = gradients(&model, &acts, y.view());
            adam.update(&mut model.layers, &grads);
        }
        let loss = loss_mse(forward(&model, features)?.view(), targets.view())?;
        log.epochs.push(EpochRecord { epoch, loss });
        if loss < best_loss {
            best_loss = loss;
            best_layers.clone_from(&model.layers);
            log.best_epoch = Some(epoch);
        }
        if loss < reference - config.early_stop.min_delta {
            reference = loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.early_stop.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if log.best_epoch.is_some() {
        model.layers = best_layers;
        log.best_loss = Some(best_loss);
    }
    model.training_log = log;
    Ok(model)
}

/// Positions in meters for raw (unnormalized) feature rows.
pub fn predict(model: &MlpModel, features: ArrayView2<f64>, norm_stats: &NormStats) -> Result<Array2<f64>> {
    if norm_stats.len() != model.architecture.input_dim {
        return Err(Error::shape(
            format!("{} normalization columns", model.architecture.input_dim),
            format!("{} columns", norm_stats.len()),
        ));
    }
    let x = norm_stats.normalize(features)?;
    let out = forward(model, x.view())?;
    match &model.label_scaling {
        Some(stats) => stats.denormalize(out.view()),
        None => Ok(out),
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDocument {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_in × fan_out`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// JSON form of a trained model plus the input statistics it expects.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    architecture: MlpArchitecture,
    layers: Vec<LayerDocument>,
    label_scaling: Option<NormStats>,
    input_norm: NormStats,
    feature_layout: Vec<String>,
    training_log: TrainingLog,
}

/// Serialize `model` together with the normalization statistics and feature
/// layout it was trained with.
pub fn model_to_json(model: &MlpModel, input_norm: &NormStats, feature_layout: &[String]) -> Result<String> {
    let doc = ModelDocument {
        architecture: model.architecture.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| LayerDocument {
                fan_in: l.weights.nrows(),
                fan_out: l.weights.ncols(),
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
        label_scaling: model.label_scaling.clone(),
        input_norm: input_norm.clone(),
        feature_layout: feature_layout.to_vec(),
        training_log: model.training_log.clone(),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Inverse of [`model_to_json`]: model, input statistics, feature layout.
pub fn model_from_json(json: &str) -> Result<(MlpModel, NormStats, Vec<String>)> {
    let doc: ModelDocument = serde_json::from_str(json)?;
    doc.architecture.validate()?;
    let dims = doc.architecture.layer_dims();
    if dims.len() != doc.layers.len() {
        return Err(Error::shape(format!("{} layers", dims.len()), format!("{} layers", doc.layers.len())));
    }
    let mut layers = Vec::with_capacity(dims.len());
    for ((fan_in, fan_out), l) in dims.into_iter().zip(doc.layers) {
        if (l.fan_in, l.fan_out) != (fan_in, fan_out) || l.bias.len() != fan_out {
            return Err(Error::shape(format!("{fan_in}x{fan_out}"), format!("{}x{}", l.fan_in, l.fan_out)));
        }
        layers.push(Layer {
            weights: Array2::from_shape_vec((fan_in, fan_out), l.weights)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            bias: Array1::from(l.bias),
        });
    }
    let model = MlpModel {
        architecture: doc.architecture,
        layers,
        training_log: doc.training_log,
        label_scaling: doc.label_scaling,
    };
    Ok((model, doc.input_norm, doc.feature_layout))
}
