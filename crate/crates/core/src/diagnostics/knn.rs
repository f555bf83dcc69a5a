//! k-NN isolation of noisy-labelled training points in a representation space.
//!
//! For each noisy sample the clean samples are ranked by descending cosine
//! similarity of their representations (ties: lower index first). The
//! majority effective label among the top `k` is compared with the noisy
//! sample's original label (`P`) and with its corrupted label (`P*`).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnReport {
    pub k: usize,
    /// Fraction of noisy samples whose neighbour majority is their original label.
    pub p: f64,
    /// Fraction whose neighbour majority is their corrupted label.
    pub p_star: f64,
    /// Number of noisy samples.
    pub m: usize,
    /// Number of clean candidate neighbours.
    pub clean: usize,
}

/// Cosine similarity with a zero-norm side defined as 0.
fn similarity(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

fn rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Majority label of `ranked` neighbours; ties go to the tied label met first
/// in rank order, i.e. the one with the single most similar neighbour.
pub fn majority(ranked_labels: &[usize], num_classes: usize) -> usize {
    let mut counts = vec![0usize; num_classes];
    for &l in ranked_labels {
        counts[l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    ranked_labels
        .iter()
        .copied()
        .find(|&l| counts[l] == best)
        .unwrap_or(0)
}

/// `representations` has one row per training sample of `noisy`.
pub fn knn_noisy_prediction(representations: &Matrix, noisy: &NoisyDataset, k: usize) -> Result<KnnReport> {
    if representations.rows() != noisy.len() {
        return Err(Error::CountMismatch {
            images: representations.rows(),
            labels: noisy.len(),
        });
    }
    if noisy.noise_mask().is_empty() {
        return Err(Error::NoNoisySamples);
    }
    let clean = noisy.clean_indices();
    if k == 0 || k > clean.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} neighbours requested from {} clean samples",
            clean.len()
        )));
    }
    let norms: Vec<f64> = representations.row_iter().map(norm).collect();
    let effective = noisy.labels_effective();
    let original = noisy.labels_original();
    let classes = noisy.num_classes();

    let mut hits = 0usize;
    let mut hits_star = 0usize;
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(clean.len());
    let mut top_labels = Vec::with_capacity(k);
    for &i in noisy.noise_mask() {
        let row = representations.row(i);
        scored.clear();
        scored.extend(
            clean
                .iter()
                .map(|&j| (similarity(row, norms[i], representations.row(j), norms[j]), j)),
        );
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank);
        top_labels.clear();
        top_labels.extend(scored.iter().map(|&(_, j)| effective[j]));
        let vote = majority(&top_labels, classes);
        hits += usize::from(vote == original[i]);
        hits_star += usize::from(vote == effective[i]);
    }
    let m = noisy.noise_mask().len();
    Ok(KnnReport {
        k,
        p: hits as f64 / m as f64,
        p_star: hits_star as f64 / m as f64,
        m,
        clean: clean.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{inject_label_noise, synthetic_blobs, Dataset, NoiseMode};

    #[test]
    fn majority_tie_goes_to_nearest() {
        assert_eq!(majority(&[3, 1, 1, 3], 10), 3);
        assert_eq!(majority(&[2, 1, 1, 3], 10), 1);
        assert_eq!(majority(&[5], 10), 5);
    }

    #[test]
    fn coincident_clean_point_counts_for_p() {
        let images = Matrix::new(3, 2, vec![0.0; 6]).unwrap();
        let ds = Dataset::new(images, vec![3, 3, 7], 10).unwrap();
        let noisy = NoisyDataset::from_parts(ds, vec![7, 3, 7], vec![0], 0.5, 0, NoiseMode::UniformAll).unwrap();
        let reps = Matrix::new(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let report = knn_noisy_prediction(&reps, &noisy, 1).unwrap();
        assert_eq!((report.p, report.p_star, report.m, report.clean), (1.0, 0.0, 1, 2));
        let report = knn_noisy_prediction(&reps, &noisy, 2).unwrap();
        // one vote each; the most similar neighbour (label 3) wins the tie
        assert_eq!((report.p, report.p_star), (1.0, 0.0));
    }

    #[test]
    fn guards() {
        let ds = synthetic_blobs(30, 3, 10, 0.2, 2).unwrap();
        let clean = inject_label_noise(&ds, 0.0, NoiseMode::UniformAll, 3).unwrap();
        assert!(matches!(
            knn_noisy_prediction(ds.images(), &clean, 3),
            Err(Error::NoNoisySamples)
        ));
        let all = inject_label_noise(&ds, 1.0, NoiseMode::UniformAll, 3).unwrap();
        assert!(matches!(
            knn_noisy_prediction(ds.images(), &all, 1),
            Err(Error::InvalidArgument(_))
        ));
    }
}
