//! Feed-forward network with manual backpropagation.
//!
//! Hidden layers use a rectifier, the output layer is linear and yields
//! logits. Training is mini-batch SGD with classical momentum, L2 weight
//! decay folded into the gradient, and a step learning-rate schedule.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math::{argmax, floor, sqrt};
use crate::{seed, Error, Matrix, Result};

const TEXT_HEADER: &str = "eaoa-mlp v1";

/// Multi-layer perceptron. `weights[l]` has shape `dims[l+1] x dims[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Parameter gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Mlp) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidParameter {
            field: "layer_dims",
            reason: "need at least an input and an output dimension".to_string(),
        });
    }
    if dims.contains(&0) {
        return Err(Error::InvalidParameter {
            field: "layer_dims",
            reason: "dimensions must be positive".to_string(),
        });
    }
    Ok(())
}

impl Mlp {
    /// Uniform Glorot initialisation, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = seed::rng(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
        }
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|p| Matrix::zeros(p[1], p[0])).collect(),
            biases: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
        })
    }

    pub fn from_parameters(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidParameter {
                field: "parameters",
                reason: "need one bias vector per weight matrix".to_string(),
            });
        }
        let mut dims = vec![weights[0].cols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != dims[l] {
                return Err(Error::Shape {
                    context: "weight columns",
                    expected: dims[l],
                    actual: w.cols(),
                });
            }
            if b.len() != w.rows() {
                return Err(Error::Shape {
                    context: "bias length",
                    expected: w.rows(),
                    actual: b.len(),
                });
            }
            dims.push(w.rows());
        }
        validate_dims(&dims)?;
        Ok(Self {
            dims,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn num_parameters(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Shape {
                context: "parameter vector",
                expected: self.num_parameters(),
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice()
                .copy_from_slice(&values[offset..offset + n]);
            offset += n;
            let m = b.len();
            b.copy_from_slice(&values[offset..offset + m]);
            offset += m;
        }
        Ok(())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape {
                context: "input batch columns",
                expected: self.input_dim(),
                actual: batch.cols(),
            });
        }
        Ok(())
    }

    fn layer(&self, l: usize, input: &Matrix, relu: bool) -> Matrix {
        let w = &self.weights[l];
        let b = &self.biases[l];
        let mut out = Matrix::zeros(input.rows(), w.rows());
        for r in 0..input.rows() {
            let x = input.row(r);
            let o = out.row_mut(r);
            for (j, oj) in o.iter_mut().enumerate() {
                let z = b[j] + w.row(j).iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                *oj = if relu && z < 0.0 { 0.0 } else { z };
            }
        }
        out
    }

    /// Outputs of every layer: hidden post-activations, then logits.
    fn trace(&self, batch: &Matrix) -> Vec<Matrix> {
        let n_layers = self.weights.len();
        let mut outs: Vec<Matrix> = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let input = if l == 0 { batch } else { &outs[l - 1] };
            let out = self.layer(l, input, l + 1 < n_layers);
            outs.push(out);
        }
        outs
    }

    /// Logits for a `B x input_dim` batch.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        Ok(self.trace(batch).pop().expect("at least one layer"))
    }

    /// Post-rectifier activations of the last hidden layer.
    pub fn penultimate(&self, batch: &Matrix) -> Result<Matrix> {
        if self.weights.len() < 2 {
            return Err(Error::InvalidParameter {
                field: "layer_dims",
                reason: "a single-layer model has no penultimate layer".to_string(),
            });
        }
        self.check_input(batch)?;
        let mut outs = self.trace(batch);
        outs.pop();
        Ok(outs.pop().expect("checked above"))
    }

    /// Parameter gradients for an upstream gradient on the logits.
    pub fn backward(&self, batch: &Matrix, grad_logits: &Matrix) -> Result<Gradients> {
        self.check_input(batch)?;
        if grad_logits.rows() != batch.rows() {
            return Err(Error::Shape {
                context: "logit gradient rows",
                expected: batch.rows(),
                actual: grad_logits.rows(),
            });
        }
        if grad_logits.cols() != self.output_dim() {
            return Err(Error::Shape {
                context: "logit gradient columns",
                expected: self.output_dim(),
                actual: grad_logits.cols(),
            });
        }
        let trace = self.trace(batch);
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(batch, &trace, grad_logits.clone(), &mut grads);
        Ok(grads)
    }

    fn backward_into(
        &self,
        batch: &Matrix,
        trace: &[Matrix],
        mut delta: Matrix,
        g: &mut Gradients,
    ) {
        for l in (0..self.weights.len()).rev() {
            let input = if l == 0 { batch } else { &trace[l - 1] };
            let gw = &mut g.weights[l];
            let gb = &mut g.biases[l];
            for r in 0..delta.rows() {
                let d = delta.row(r);
                let x = input.row(r);
                for (j, &dj) in d.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    gb[j] += dj;
                    for (gwji, &xi) in gw.row_mut(j).iter_mut().zip(x) {
                        *gwji += dj * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = Matrix::zeros(delta.rows(), w.cols());
            for r in 0..delta.rows() {
                let d = delta.row(r);
                let act = input.row(r);
                let p = prev.row_mut(r);
                for (j, &dj) in d.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    for (pi, &wji) in p.iter_mut().zip(w.row(j)) {
                        *pi += dj * wji;
                    }
                }
                for (pi, &a) in p.iter_mut().zip(act) {
                    if a <= 0.0 {
                        *pi = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }

    /// Versioned plain-text checkpoint. Values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from(TEXT_HEADER);
        out.push_str("\ndims");
        for d in &self.dims {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push_str(&format!("weights {l}"));
            for v in w.as_slice() {
                out.push_str(&format!(" {v}"));
            }
            out.push_str(&format!("\nbiases {l}"));
            for v in b {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TEXT_HEADER) {
            return Err(Error::Parse(format!("expected header `{TEXT_HEADER}`")));
        }
        let dims: Vec<usize> = parse_tagged(lines.next(), "dims", None)?;
        let mut model = Self::zeros(&dims)?;
        for l in 0..dims.len() - 1 {
            let w: Vec<f64> = parse_tagged(lines.next(), "weights", Some(l))?;
            let b: Vec<f64> = parse_tagged(lines.next(), "biases", Some(l))?;
            model.weights[l] = Matrix::from_vec(dims[l + 1], dims[l], w)?;
            if b.len() != dims[l + 1] {
                return Err(Error::Parse(format!("layer {l}: wrong bias count")));
            }
            model.biases[l] = b;
        }
        Ok(model)
    }
}

fn parse_tagged<T: core::str::FromStr>(
    line: Option<&str>,
    tag: &str,
    index: Option<usize>,
) -> Result<Vec<T>> {
    let line = line.ok_or_else(|| Error::Parse(format!("missing `{tag}` line")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::Parse(format!("expected `{tag}` line")));
    }
    if let Some(i) = index {
        if parts.next().and_then(|p| p.parse::<usize>().ok()) != Some(i) {
            return Err(Error::Parse(format!("expected `{tag} {i}`")));
        }
    }
    parts
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Parse(format!("bad value `{p}` in `{tag}` line")))
        })
        .collect()
}

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 100,
            lr_decay_factor: 0.1,
            lr_decay_every: 40,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be a non-negative finite number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return bad("lr_decay_factor", "must be positive");
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every", "must be positive");
        }
        Ok(())
    }

    /// Step schedule: `lr * factor^floor(epoch / every)`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = floor(epoch as f64 / self.lr_decay_every as f64) as i32;
        self.learning_rate * libm::pow(self.lr_decay_factor, steps as f64)
    }
}

/// A per-example loss that also reports its gradient on the logits.
pub trait ExampleLoss {
    /// Returns the loss and overwrites `grad` with `d loss / d logits`.
    fn evaluate(&self, logits: &[f64], label: usize, grad: &mut [f64]) -> Result<f64>;
}

impl<L: ExampleLoss + ?Sized> ExampleLoss for &L {
    fn evaluate(&self, logits: &[f64], label: usize, grad: &mut [f64]) -> Result<f64> {
        (**self).evaluate(logits, label, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Mlp,
    /// Mean per-example loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains `model` with mini-batch SGD on mean batch loss.
///
/// Each epoch draws a fresh seeded permutation and keeps the last partial
/// batch. The update is `v = momentum * v + (g + weight_decay * w)`,
/// `w -= lr * v`.
pub fn train_epochs<L: ExampleLoss>(
    mut model: Mlp,
    inputs: &Matrix,
    labels: &[usize],
    loss: &L,
    cfg: &SgdConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.rows() == 0 {
        return Err(Error::Empty {
            what: "training data",
        });
    }
    if labels.len() != inputs.rows() {
        return Err(Error::Shape {
            context: "training labels",
            expected: inputs.rows(),
            actual: labels.len(),
        });
    }
    model.check_input(inputs)?;
    let classes = model.output_dim();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }

    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut velocity = Gradients::zeros_like(&model);
    let mut grad_row = vec![0.0; classes];
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = inputs.select_rows(chunk);
            let trace = model.trace(&batch);
            let logits = trace.last().expect("at least one layer");
            let scale = 1.0 / chunk.len() as f64;
            let mut upstream = Matrix::zeros(chunk.len(), classes);
            let mut batch_loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let l = loss.evaluate(logits.row(r), labels[i], &mut grad_row)?;
                batch_loss += l;
                for (u, g) in upstream.row_mut(r).iter_mut().zip(&grad_row) {
                    *u = g * scale;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += batch_loss;

            let mut grads = Gradients::zeros_like(&model);
            model.backward_into(&batch, &trace, upstream, &mut grads);
            sgd_step(&mut model, &grads, &mut velocity, lr, cfg);
        }
        loss_trace.push(epoch_loss / inputs.rows() as f64);
    }
    Ok(TrainOutcome { model, loss_trace })
}

fn sgd_step(
    model: &mut Mlp,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    cfg: &SgdConfig,
) {
    let update = |p: &mut [f64], g: &[f64], v: &mut [f64]| {
        for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
            *p -= lr * *v;
        }
    };
    for l in 0..model.weights.len() {
        update(
            model.weights[l].as_mut_slice(),
            grads.weights[l].as_slice(),
            velocity.weights[l].as_mut_slice(),
        );
        update(
            &mut model.biases[l],
            &grads.biases[l],
            &mut velocity.biases[l],
        );
    }
}

/// Argmax class of each row.
pub fn predict(model: &Mlp, inputs: &Matrix) -> Result<Vec<usize>> {
    let logits = model.forward(inputs)?;
    Ok(logits.iter_rows().map(argmax).collect())
}

/// Fraction of rows whose argmax matches the label. Zero rows give 0.
pub fn accuracy(model: &Mlp, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    if inputs.rows() == 0 {
        return Ok(0.0);
    }
    let predicted = predict(model, inputs)?;
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / inputs.rows() as f64)
}
