use serde::{Deserialize, Serialize};

use super::{argmax, MlpModel};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// Plain mini-batch SGD settings. There is deliberately no momentum, weight
/// decay or augmentation knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    /// Epochs between learning-rate decays.
    #[serde(default = "default_lr_step")]
    pub lr_step: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch_size() -> usize {
    128
}

fn default_lr0() -> f64 {
    0.05
}

fn default_lr_step() -> usize {
    50
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4000,
            batch_size: default_batch_size(),
            lr0: default_lr0(),
            lr_step: default_lr_step(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.lr_step == 0 {
            return Err(Error::Config("lr_step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Step-decayed rate `lr0 / √(1 + ⌊epoch / lr_step⌋)`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr0 / ((1 + epoch / config.lr_step) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean mini-batch loss over the epoch, measured before each update.
    pub train_loss: f64,
    /// Fraction misclassified over the epoch, measured before each update.
    pub train_error: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
}

/// Trains `model` with SGD on `(inputs, labels)`.
///
/// Each epoch visits a fresh seeded permutation in batches of
/// `batch_size`; the last batch may be short.
pub fn train(mut model: MlpModel, inputs: &Matrix, labels: &[usize], config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if inputs.rows() == 0 {
        return Err(Error::Empty("training set is empty".into()));
    }
    if inputs.rows() != labels.len() {
        return Err(Error::CountMismatch {
            images: inputs.rows(),
            labels: labels.len(),
        });
    }
    if inputs.cols() != model.input_width() {
        return Err(Error::DimensionMismatch {
            op: "train",
            left: inputs.shape(),
            right: (model.input_width(), 0),
        });
    }
    let classes = model.num_classes();
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }

    let n = inputs.rows();
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch_labels = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut wrong = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = inputs.select_rows(chunk);
            batch_labels.clear();
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let (loss, grads, mistakes) = model.backprop_counting(&batch, &batch_labels);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            wrong += mistakes;
            model.apply_gradients(&grads, lr);
        }
        history.push(EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_error: wrong as f64 / n as f64,
        });
    }
    if model.flat_params().iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            epoch: config.epochs,
            loss: f64::NAN,
        });
    }
    Ok(Trained { model, history })
}

impl MlpModel {
    fn backprop_counting(&self, batch: &Matrix, labels: &[usize]) -> (f64, super::Gradients, usize) {
        // misclassifications are read off the same logits the gradient uses
        let (loss, grads, logits) = self.backprop_with_logits(batch, labels);
        let wrong = logits.row_iter().zip(labels).filter(|(r, &y)| argmax(r) != y).count();
        (loss, grads, wrong)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub error: f64,
}

/// Mean cross-entropy and 0-1 error over a labelled set.
pub fn evaluate(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<Evaluation> {
    if inputs.rows() == 0 {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let cap = model.forward(inputs)?;
    let classes = model.num_classes();
    let mut loss = 0.0;
    let mut wrong = 0;
    for ((row, &y), &pred) in cap.logits().row_iter().zip(labels).zip(&cap.predicted) {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        if pred != y {
            wrong += 1;
        }
    }
    let n = labels.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        error: wrong as f64 / n,
    })
}
