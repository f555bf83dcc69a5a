//! Weight sparsity, activation sparsity and class-wise neural NDCG.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ActivationCapture, MlpModel};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRatio {
    pub threshold: f64,
    /// Fraction of weights with `|w| < threshold`.
    pub ratio: f64,
}

/// Fraction of weights (biases excluded) below each threshold in magnitude,
/// sorted by threshold.
pub fn weight_sparsity(model: &MlpModel, thresholds: &[f64]) -> Vec<ThresholdRatio> {
    let mut mags: Vec<f64> = model.weights().iter().flat_map(|w| w.data().iter().map(|v| v.abs())).collect();
    mags.sort_unstable_by(f64::total_cmp);
    let mut ts = thresholds.to_vec();
    ts.sort_unstable_by(f64::total_cmp);
    let total = mags.len().max(1) as f64;
    ts.into_iter()
        .map(|t| ThresholdRatio {
            threshold: t,
            ratio: mags.partition_point(|&m| m < t) as f64 / total,
        })
        .collect()
}

pub fn exact_zero_weights(model: &MlpModel) -> usize {
    model.weights().iter().flat_map(|w| w.data()).filter(|&&v| v == 0.0).count()
}

fn hidden(capture: &ActivationCapture) -> Result<&Matrix> {
    capture
        .penultimate()
        .ok_or_else(|| Error::InvalidArgument("capture has no hidden layer".into()))
}

/// Mean over samples of the fraction of strictly positive units in `layer`.
pub fn activation_sparsity_of(layer: &Matrix) -> f64 {
    if layer.rows() == 0 || layer.cols() == 0 {
        return 0.0;
    }
    let width = layer.cols() as f64;
    layer
        .row_iter()
        .map(|r| r.iter().filter(|&&v| v > 0.0).count() as f64 / width)
        .sum::<f64>()
        / layer.rows() as f64
}

/// Activation ratio of the last hidden layer.
pub fn activation_sparsity(capture: &ActivationCapture) -> Result<f64> {
    Ok(activation_sparsity_of(hidden(capture)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcgReport {
    /// Mean rescaled NDCG over neurons that fire at least once.
    pub value: f64,
    pub active_neurons: usize,
    pub silent_neurons: usize,
}

/// DCG of a frequency distribution sorted in descending order.
fn dcg(sorted_desc: &[f64]) -> f64 {
    sorted_desc
        .iter()
        .enumerate()
        .map(|(r, f)| f / ((r + 2) as f64).log2())
        .sum()
}

/// Rescaled DCG: 0 for the uniform distribution over `classes`, 1 for one-hot.
pub fn rescaled_dcg(freqs: &[f64], classes: usize) -> f64 {
    let mut sorted = freqs.to_vec();
    sorted.resize(classes, 0.0);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let uniform = dcg(&vec![1.0 / classes as f64; classes]);
    (dcg(&sorted) - uniform) / (1.0 - uniform)
}

/// Class-wise NDCG of per-neuron firing frequencies over predicted classes.
pub fn class_ndcg_of(layer: &Matrix, predicted: &[usize], classes: usize) -> Result<NdcgReport> {
    if classes < 2 {
        return Err(Error::InvalidArgument("NDCG needs at least two classes".into()));
    }
    if predicted.len() != layer.rows() {
        return Err(Error::CountMismatch {
            images: layer.rows(),
            labels: predicted.len(),
        });
    }
    let width = layer.cols();
    let mut counts = vec![0usize; width * classes];
    for (row, &c) in layer.row_iter().zip(predicted) {
        for (u, &v) in row.iter().enumerate() {
            if v > 0.0 {
                counts[u * classes + c] += 1;
            }
        }
    }
    let mut sum = 0.0;
    let mut active = 0;
    for per_class in counts.chunks_exact(classes) {
        let fired: usize = per_class.iter().sum();
        if fired == 0 {
            continue;
        }
        let freqs: Vec<f64> = per_class.iter().map(|&c| c as f64 / fired as f64).collect();
        sum += rescaled_dcg(&freqs, classes);
        active += 1;
    }
    if active == 0 {
        return Err(Error::InvalidArgument("no neuron ever activates".into()));
    }
    Ok(NdcgReport {
        value: sum / active as f64,
        active_neurons: active,
        silent_neurons: width - active,
    })
}

/// NDCG of the last hidden layer, bucketed by predicted class.
pub fn class_ndcg(capture: &ActivationCapture) -> Result<NdcgReport> {
    class_ndcg_of(hidden(capture)?, &capture.predicted, capture.num_classes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub weight_ratio_by_threshold: Vec<ThresholdRatio>,
    pub exact_zero_weights: usize,
    pub activation_nonzero_ratio: f64,
    pub ndcg: NdcgReport,
}

pub fn sparsity_report(model: &MlpModel, capture: &ActivationCapture, thresholds: &[f64]) -> Result<SparsityReport> {
    Ok(SparsityReport {
        weight_ratio_by_threshold: weight_sparsity(model, thresholds),
        exact_zero_weights: exact_zero_weights(model),
        activation_nonzero_ratio: activation_sparsity(capture)?,
        ndcg: class_ndcg(capture)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_model;
    use crate::tensor::Rng;

    #[test]
    fn zero_model_is_fully_sparse() {
        let m = MlpModel::zeros(&[5, 3, 2]).unwrap();
        for r in weight_sparsity(&m, &[0.1, 0.01]) {
            assert_eq!(r.ratio, 1.0);
        }
        assert_eq!(exact_zero_weights(&m), 21);
    }

    #[test]
    fn ratios_follow_threshold_order() {
        let m = init_model(&[30, 20, 10], &mut Rng::new(3)).unwrap();
        let r = weight_sparsity(&m, &[0.1, 0.001, 0.01, 1.0]);
        assert!(r.windows(2).all(|w| w[0].threshold < w[1].threshold && w[0].ratio <= w[1].ratio));
        assert!(r.iter().all(|x| (0.0..=1.0).contains(&x.ratio)));
    }

    #[test]
    fn activation_ratio_bounds_and_oracle() {
        assert_eq!(activation_sparsity_of(&Matrix::zeros(4, 3)), 0.0);
        assert_eq!(activation_sparsity_of(&Matrix::new(2, 2, vec![0.1, 2.0, 3.0, 1e-9]).unwrap()), 1.0);
        let mut rng = Rng::new(6);
        let layer = Matrix::new(9, 7, (0..63).map(|_| rng.uniform_in(-1.0, 1.0).max(0.0)).collect()).unwrap();
        let mut acc = 0.0;
        for i in 0..9 {
            let mut on = 0.0;
            for j in 0..7 {
                if layer.get(i, j) > 0.0 {
                    on += 1.0;
                }
            }
            acc += on / 7.0;
        }
        assert!((activation_sparsity_of(&layer) - acc / 9.0).abs() < 1e-15);
    }

    #[test]
    fn ndcg_endpoints_and_hand_value() {
        let mut one_hot = vec![0.0; 10];
        one_hot[5] = 1.0;
        assert_eq!(rescaled_dcg(&one_hot, 10), 1.0);
        assert_eq!(rescaled_dcg(&[0.1; 10], 10), 0.0);
        // (0.5 + 0.5/log2 3 − U) / (1 − U) with U = (1/10) Σ_{r=1..10} 1/log2(r+1)
        let half = rescaled_dcg(&[0.5, 0.5], 10);
        assert!((half - 0.6618031155320587).abs() < 1e-12);
        let three = rescaled_dcg(&[0.1, 0.0, 0.6, 0.3], 10);
        assert!((three - 0.7054470416026583).abs() < 1e-12);
    }

    #[test]
    fn ndcg_from_layers() {
        // every neuron fires only on samples predicted as class 5
        let layer = Matrix::new(4, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 4.0, 1.0, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let r = class_ndcg_of(&layer, &[5, 2, 5, 7], 10).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.active_neurons, 3);

        // one sample per class, all neurons on: uniform
        let layer = Matrix::new(10, 2, vec![1.0; 20]).unwrap();
        let pred: Vec<usize> = (0..10).collect();
        assert_eq!(class_ndcg_of(&layer, &pred, 10).unwrap().value, 0.0);

        let silent = Matrix::zeros(3, 2);
        assert!(class_ndcg_of(&silent, &[0, 1, 2], 10).is_err());
    }
}
