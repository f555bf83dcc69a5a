//! Fully connected ReLU networks with hand-written backpropagation.
//!
//! A model with `widths = [d_in, k_1, …, d_out]` has one dense layer per
//! consecutive pair. Hidden layers apply ReLU; the last layer emits raw logits
//! that feed a softmax cross-entropy loss.

mod checkpoint;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use train::{evaluate, lr_at, train, EpochStats, Evaluation, TrainConfig, Trained};

use crate::error::{Error, Result};
use crate::tensor::{self, Matrix, Rng};

/// Number of trainable parameters of a dense network with the given widths.
pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    widths: Vec<usize>,
    /// `weights[l]` has shape `(widths[l], widths[l + 1])`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a network needs at least input and output widths, got {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidArgument(format!("non-positive layer width in {widths:?}")));
    }
    Ok(())
}

/// He-style uniform initialisation: `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
pub fn init_model(widths: &[usize], rng: &mut Rng) -> Result<MlpModel> {
    validate_widths(widths)?;
    let weights = widths
        .windows(2)
        .map(|w| {
            let bound = (6.0 / w[0] as f64).sqrt();
            let data = (0..w[0] * w[1]).map(|_| rng.uniform_in(-bound, bound)).collect();
            Matrix::from_raw(w[0], w[1], data)
        })
        .collect();
    let biases = widths[1..].iter().map(|&n| vec![0.0; n]).collect();
    Ok(MlpModel {
        widths: widths.to_vec(),
        weights,
        biases,
    })
}

impl MlpModel {
    /// All-zero network, mostly useful for tests and degenerate baselines.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect(),
            biases: widths[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn from_parts(widths: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        validate_widths(&widths)?;
        if weights.len() != widths.len() - 1 || biases.len() != widths.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} layers, got {} weight and {} bias blocks",
                widths.len() - 1,
                weights.len(),
                biases.len()
            )));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape() != (widths[l], widths[l + 1]) || b.len() != widths[l + 1] {
                return Err(Error::DimensionMismatch {
                    op: "MlpModel::from_parts",
                    left: (widths[l], widths[l + 1]),
                    right: w.shape(),
                });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("MlpModel::from_parts"));
            }
        }
        Ok(Self { widths, weights, biases })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn count_params(&self) -> usize {
        param_count(&self.widths)
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                op: "forward",
                left: batch.shape(),
                right: (self.input_width(), self.widths[1]),
            });
        }
        Ok(())
    }

    /// Per-layer activations; `out[0]` is the input and `out[L]` the logits.
    fn activations(&self, batch: &Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(batch.clone());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = tensor::mm(&acts[l], w);
            let cols = z.cols();
            for row in z.data_mut().chunks_exact_mut(cols) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if l < last && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ActivationCapture> {
        self.check_input(batch)?;
        let layers = self.activations(batch);
        if layers.iter().any(|m| m.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("forward"));
        }
        let predicted = layers.last().expect("at least one layer").row_iter().map(argmax).collect();
        Ok(ActivationCapture { layers, predicted })
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grads(&self, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(batch)?;
        if labels.len() != batch.rows() {
            return Err(Error::DimensionMismatch {
                op: "loss_and_grads",
                left: batch.shape(),
                right: (labels.len(), 1),
            });
        }
        let classes = self.num_classes();
        if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let (loss, grads) = self.backprop(batch, labels);
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss_and_grads"));
        }
        Ok((loss, grads))
    }

    /// Unchecked forward/backward pass shared with the training loop.
    pub(crate) fn backprop(&self, batch: &Matrix, labels: &[usize]) -> (f64, Gradients) {
        let (loss, grads, _) = self.backprop_with_logits(batch, labels);
        (loss, grads)
    }

    pub(crate) fn backprop_with_logits(&self, batch: &Matrix, labels: &[usize]) -> (f64, Gradients, Matrix) {
        let mut acts = self.activations(batch);
        let n = batch.rows().max(1) as f64;
        let (loss, mut delta) = softmax_xent(acts.last().expect("logits"), labels);
        delta.data_mut().iter_mut().for_each(|v| *v /= n);

        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        for l in (0..layers).rev() {
            gw.push(tensor::mm_tn(&acts[l], &delta));
            gb.push(column_sums(&delta));
            if l > 0 {
                let mut upstream = tensor::mm_nt(&delta, &self.weights[l]);
                for (g, &a) in upstream.data_mut().iter_mut().zip(acts[l].data()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = upstream;
            }
        }
        gw.reverse();
        gb.reverse();
        let logits = acts.pop().expect("logits");
        (loss, Gradients { weights: gw, biases: gb }, logits)
    }

    /// `θ ← θ − lr·∇θ`.
    pub(crate) fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (p, d) in w.data_mut().iter_mut().zip(g.data()) {
                *p -= lr * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (p, d) in b.iter_mut().zip(g) {
                *p -= lr * d;
            }
        }
    }

    /// Flat view of every parameter, layer by layer (weights then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`MlpModel::flat_params`].
    pub fn with_flat_params(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.count_params() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.count_params(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        let mut off = 0;
        for (w, b) in out.weights.iter_mut().zip(out.biases.iter_mut()) {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            let len = b.len();
            b.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(out)
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Snapshot of every layer's activations for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCapture {
    /// `layers[0]` is the input, `layers[L]` the pre-softmax logits;
    /// hidden layers hold post-ReLU values.
    pub layers: Vec<Matrix>,
    /// Argmax of the logits, lowest index on ties.
    pub predicted: Vec<usize>,
}

impl ActivationCapture {
    pub fn num_samples(&self) -> usize {
        self.predicted.len()
    }

    pub fn layer(&self, l: usize) -> Option<&Matrix> {
        self.layers.get(l)
    }

    pub fn logits(&self) -> &Matrix {
        self.layers.last().expect("capture has layers")
    }

    pub fn num_classes(&self) -> usize {
        self.logits().cols()
    }

    /// Last hidden layer `f_{L-1}`, absent for a network without hidden layers.
    pub fn penultimate(&self) -> Option<&Matrix> {
        if self.layers.len() < 3 {
            None
        } else {
            self.layers.get(self.layers.len() - 2)
        }
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Summed cross-entropy is returned as a mean; the delta is `softmax − onehot`
/// (not yet divided by the batch size).
fn softmax_xent(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let cols = logits.cols();
    let mut delta = logits.clone();
    let mut total = 0.0;
    for (row, &y) in delta.data_mut().chunks_exact_mut(cols).zip(labels) {
        let top = argmax(row);
        let max = row[top];
        let shifted_y = row[y] - max;
        let mut rest = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - max).exp();
            if j != top {
                rest += *v;
            }
        }
        // log-sum-exp split as ln(1 + rest) keeps tiny losses from rounding to 0
        total += rest.ln_1p() - shifted_y;
        let sum = 1.0 + rest;
        for v in row.iter_mut() {
            *v /= sum;
        }
        row[y] -= 1.0;
    }
    (total / labels.len().max(1) as f64, delta)
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}
