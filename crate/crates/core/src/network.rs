//! Feed-forward ReLU classifier with hand-written backpropagation.
//!
//! Every layer computes `z = x·W + b` with `W` stored row-major as a
//! `fan_in × fan_out` matrix. Hidden layers apply ReLU; the final layer
//! emits raw logits. Gradients are exact, with the ReLU derivative taken as
//! zero at the kink.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

impl HiddenLayer {
    pub fn relu(width: usize) -> Self {
        HiddenLayer {
            width,
            activation: Activation::Relu,
        }
    }
}

/// Layer structure of a classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<HiddenLayer>,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_widths: &[usize], num_classes: usize) -> Result<Self> {
        let spec = ModelSpec {
            input_dim,
            hidden_layers: hidden_widths
                .iter()
                .map(|&w| HiddenLayer::relu(w))
                .collect(),
            num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Pure linear (softmax regression) model.
    pub fn linear(input_dim: usize, num_classes: usize) -> Result<Self> {
        ModelSpec::new(input_dim, &[], num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.hidden_layers.iter().any(|h| h.width == 0) {
            return Err(Error::InvalidSpec(
                "hidden layer widths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = self.input_dim;
        for h in &self.hidden_layers {
            dims.push((fan_in, h.width));
            fan_in = h.width;
        }
        dims.push((fan_in, self.num_classes));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Compact description such as `2-16-16-3`.
    pub fn describe(&self) -> String {
        let mut parts = vec![self.input_dim.to_string()];
        parts.extend(self.hidden_layers.iter().map(|h| h.width.to_string()));
        parts.push(self.num_classes.to_string());
        parts.join("-")
    }
}

/// One affine layer. `weights[i * fan_out + j]` connects input `i` to output `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.fan_out + j]
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.biases.clone();
        for (i, &xi) in input.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.fan_out..(i + 1) * self.fan_out];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }
}

/// Weights and biases of a classifier together with the spec they realize.
///
/// `seed` records the seed of the run that produced the parameters; it is
/// carried into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    spec: ModelSpec,
    layers: Vec<Layer>,
    seed: u64,
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Gradient {
            layers: spec
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.biases.iter_mut().for_each(|b| *b *= factor);
        }
    }

    /// All entries flattened in checkpoint order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input seen by each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer; the last entry holds the logits.
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }

    /// Pre-activations of the hidden layers, for kink diagnostics.
    pub fn hidden_preactivations(&self) -> &[Vec<f64>] {
        &self.pre[..self.pre.len() - 1]
    }
}

impl Parameters {
    /// Assembles parameters from explicit layers, checking every shape.
    pub fn from_layers(spec: ModelSpec, layers: Vec<Layer>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::InvalidSpec(format!(
                "spec {} has {} layers, got {}",
                spec.describe(),
                dims.len(),
                layers.len()
            )));
        }
        for (k, ((fan_in, fan_out), layer)) in dims.iter().zip(&layers).enumerate() {
            if layer.fan_in != *fan_in
                || layer.fan_out != *fan_out
                || layer.weights.len() != fan_in * fan_out
                || layer.biases.len() != *fan_out
            {
                return Err(Error::InvalidSpec(format!(
                    "layer {k} does not match {fan_in}x{fan_out}"
                )));
            }
            if layer.values().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "layer {k} has non-finite entries"
                )));
            }
        }
        Ok(Parameters { spec, layers, seed })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// All parameters flattened as weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }

    /// Inverse of [`Parameters::flatten`].
    pub fn from_flat(spec: ModelSpec, values: &[f64], seed: u64) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                actual: values.len(),
            });
        }
        let mut offset = 0;
        let mut layers = Vec::new();
        for (fan_in, fan_out) in spec.layer_dims() {
            let nw = fan_in * fan_out;
            let weights = values[offset..offset + nw].to_vec();
            offset += nw;
            let biases = values[offset..offset + fan_out].to_vec();
            offset += fan_out;
            layers.push(Layer {
                fan_in,
                fan_out,
                weights,
                biases,
            });
        }
        Parameters::from_layers(spec, layers, seed)
    }

    /// Plain gradient step `θ - lr·g`.
    pub fn sgd_step(&self, grad: &Gradient, learning_rate: f64) -> Parameters {
        let layers = self
            .layers
            .iter()
            .zip(&grad.layers)
            .map(|(l, g)| Layer {
                fan_in: l.fan_in,
                fan_out: l.fan_out,
                weights: l
                    .weights
                    .iter()
                    .zip(&g.weights)
                    .map(|(w, d)| w - learning_rate * d)
                    .collect(),
                biases: l
                    .biases
                    .iter()
                    .zip(&g.biases)
                    .map(|(b, d)| b - learning_rate * d)
                    .collect(),
            })
            .collect();
        Parameters {
            spec: self.spec.clone(),
            layers,
            seed: self.seed,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.spec.num_classes {
            return Err(Error::InvalidLabel {
                label,
                num_classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate value.
    pub fn trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&current);
            let next = if k + 1 < n {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Ok(ForwardTrace { inputs, pre })
    }

    /// Logits for a flat input.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut current = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&current);
            if k + 1 < n {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            current = z;
        }
        Ok(current)
    }

    /// Backpropagates `dlogits` through a recorded forward pass, returning
    /// the parameter gradient and the input gradient.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &[f64]) -> (Gradient, Vec<f64>) {
        let n = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(n);
        let mut delta = dlogits.to_vec();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if k + 1 < n {
                for (d, z) in delta.iter_mut().zip(&trace.pre[k]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[k];
            let mut g = Layer::zeros(layer.fan_in, layer.fan_out);
            let mut delta_in = vec![0.0; layer.fan_in];
            for i in 0..layer.fan_in {
                let row = i * layer.fan_out;
                let mut acc = 0.0;
                for j in 0..layer.fan_out {
                    g.weights[row + j] = input[i] * delta[j];
                    acc += layer.weights[row + j] * delta[j];
                }
                delta_in[i] = acc;
            }
            g.biases.copy_from_slice(&delta);
            grads.push(g);
            delta = delta_in;
        }
        grads.reverse();
        (Gradient { layers: grads }, delta)
    }

    /// Cross-entropy loss and its gradient with respect to the input.
    pub fn loss_and_input_grad(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_label(label)?;
        let trace = self.trace(x)?;
        let logits = trace.logits();
        let loss = cross_entropy(logits, label);
        let dlogits = xent_logit_grad(logits, label);
        let (_, dx) = self.backward(&trace, &dlogits);
        Ok((loss, dx))
    }

    /// Cross-entropy loss and its gradient with respect to the parameters.
    pub fn loss_and_param_grad(&self, x: &[f64], label: usize) -> Result<(f64, Gradient)> {
        self.check_label(label)?;
        let trace = self.trace(x)?;
        let logits = trace.logits();
        let loss = cross_entropy(logits, label);
        let dlogits = xent_logit_grad(logits, label);
        let (g, _) = self.backward(&trace, &dlogits);
        Ok((loss, g))
    }

    pub fn loss_at(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check_label(label)?;
        Ok(cross_entropy(&self.logits(x)?, label))
    }

    pub fn predict_slice(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// One labelled input. Inputs live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Tensor,
    pub y: usize,
}

impl Example {
    pub fn new(x: Tensor, y: usize) -> Result<Self> {
        if let Some(v) = x.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "example input entry {v} outside [0, 1]"
            )));
        }
        Ok(Example { x, y })
    }

    pub fn from_vec(x: Vec<f64>, y: usize) -> Result<Self> {
        Example::new(Tensor::vector(x)?, y)
    }
}

/// Initializes parameters with weights uniform on `±1/sqrt(fan_in)` and
/// zero biases. Weights are drawn layer by layer in storage order.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Parameters> {
    spec.validate()?;
    let mut rng = Rng::new(seed);
    let layers = spec
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            Layer {
                fan_in,
                fan_out,
                weights: (0..fan_in * fan_out)
                    .map(|_| rng.uniform(-scale, scale))
                    .collect(),
                biases: vec![0.0; fan_out],
            }
        })
        .collect();
    Parameters::from_layers(spec.clone(), layers, seed)
}

pub fn forward_logits(params: &Parameters, x: &Tensor) -> Result<Tensor> {
    let logits = params.logits(x.data())?;
    Tensor::vector(logits)
}

/// `-log softmax(logits)[label]`, computed stably.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    (sum.ln() - (logits[label] - max)).max(0.0)
}

pub fn loss_xent(logits: &Tensor, label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            num_classes: logits.len(),
        });
    }
    Ok(cross_entropy(logits.data(), label))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of cross-entropy with respect to the logits: `softmax - onehot`.
pub fn xent_logit_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[label] -= 1.0;
    p
}

pub fn grad_input(params: &Parameters, ex: &Example, label_for_loss: usize) -> Result<Tensor> {
    let (_, dx) = params.loss_and_input_grad(ex.x.data(), label_for_loss)?;
    Ok(ex.x.with_data(dx))
}

/// Mean cross-entropy parameter gradient over a batch.
pub fn grad_params(params: &Parameters, batch: &[(Example, usize)]) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = Gradient::zeros(params.spec());
    for (ex, label) in batch {
        let (_, g) = params.loss_and_param_grad(ex.x.data(), *label)?;
        total.add_assign(&g);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

/// Distance between two logit vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitDistance {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl LogitDistance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            LogitDistance::SquaredEuclidean => sq,
            LogitDistance::Euclidean => sq.sqrt(),
        }
    }

    /// Gradient with respect to `a`; the gradient with respect to `b` is its
    /// negation. The Euclidean gradient is taken as zero when `a == b`.
    pub fn grad_a(self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        match self {
            LogitDistance::SquaredEuclidean => diff.into_iter().map(|d| 2.0 * d).collect(),
            LogitDistance::Euclidean => {
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm == 0.0 {
                    vec![0.0; diff.len()]
                } else {
                    diff.into_iter().map(|d| d / norm).collect()
                }
            }
        }
    }
}

/// Squared Euclidean distance between logit vectors.
pub fn logit_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(LogitDistance::SquaredEuclidean.eval(a.data(), b.data()))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &Parameters, x: &Tensor) -> Result<usize> {
    params.predict_slice(x.data())
}
