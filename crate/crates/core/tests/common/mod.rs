//! Independent reference implementations shared by the integration tests
//! and the acceptance run. Everything here is deliberately naive.

#![allow(dead_code, clippy::needless_range_loop)]

use ddlab::data::{inject_label_noise, synthetic_blobs, NoiseMode, NoisyDataset};
use ddlab::nn::{init_model, MlpModel};
use ddlab::tensor::{Matrix, Rng};

/// Fraction of gradient coordinates of a random MLP that agree with central
/// finite differences. A coordinate agrees when its relative error is at
/// most `tol`, or when both values are below 1e-9 in magnitude.
pub fn gradient_agreement(model: &MlpModel, batch: &Matrix, labels: &[usize], eps: f64, tol: f64) -> (usize, usize) {
    let (_, grads) = model.loss_and_grads(batch, labels).unwrap();
    let analytic = grads.flat();
    let base = model.flat_params();
    let loss_at = |params: &[f64]| {
        let m = model.with_flat_params(params).unwrap();
        m.loss_and_grads(batch, labels).unwrap().0
    };
    let mut good = 0;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        if (a - numeric).abs() <= tol * scale || scale < 1e-9 {
            good += 1;
        }
    }
    (good, base.len())
}

/// 20 random MLPs with widths bounded by [10, 8, 5] and batches of at most 6.
pub fn gradient_check_suite(seed: u64) -> (usize, usize) {
    let mut rng = Rng::new(seed);
    let (mut good, mut total) = (0, 0);
    for _ in 0..20 {
        let widths = [2 + rng.below(9), 1 + rng.below(8), 2 + rng.below(4)];
        let model = init_model(&widths, &mut rng).unwrap();
        let n = 1 + rng.below(6);
        let data: Vec<f64> = (0..n * widths[0]).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let batch = Matrix::new(n, widths[0], data).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(widths[2])).collect();
        let (g, t) = gradient_agreement(&model, &batch, &labels, 1e-5, 1e-4);
        good += g;
        total += t;
    }
    (good, total)
}

/// Per-class mean outer product accumulated sample by sample.
pub fn naive_cam(lower: &Matrix, upper: &Matrix, predicted: &[usize], class: usize) -> Option<Vec<Vec<f64>>> {
    let mut acc = vec![vec![0.0; upper.cols()]; lower.cols()];
    let mut count = 0;
    for (i, &c) in predicted.iter().enumerate() {
        if c != class {
            continue;
        }
        count += 1;
        for a in 0..lower.cols() {
            for b in 0..upper.cols() {
                acc[a][b] += lower.get(i, a) * upper.get(i, b);
            }
        }
    }
    if count == 0 {
        return None;
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= count as f64;
        }
    }
    Some(acc)
}

/// Sup over every sign vector of the unit-mean score of one group, by
/// enumeration in the same accumulation order as a direct reading of the
/// definition: column sums over the group first, then the mean over units.
pub fn exhaustive_sup(acts: &Matrix, group: &[usize]) -> f64 {
    let g = group.len();
    let mut best = f64::NEG_INFINITY;
    for pattern in 0u64..(1u64 << g) {
        let mut col = vec![0.0; acts.cols()];
        for (bit, &i) in group.iter().enumerate() {
            let s = if (pattern >> bit) & 1 == 1 { 1.0 } else { -1.0 };
            for (u, c) in col.iter_mut().enumerate() {
                *c += s * acts.get(i, u);
            }
        }
        let score = col.iter().map(|v| v / g as f64).sum::<f64>() / acts.cols() as f64;
        if score > best {
            best = score;
        }
    }
    best
}

/// Closed form of the same sup: each sign aligns with its sample's unit mean.
pub fn closed_form_sup(acts: &Matrix, group: &[usize]) -> f64 {
    let g = group.len() as f64;
    let w = acts.cols() as f64;
    group
        .iter()
        .map(|&i| (acts.row(i).iter().sum::<f64>() / w).abs())
        .sum::<f64>()
        / g
}

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// `(P, P*)` from the full pairwise similarity table and a full sort.
pub fn brute_force_knn(reps: &Matrix, noisy: &NoisyDataset, k: usize) -> (f64, f64) {
    let n = reps.rows();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sim[i][j] = naive_cos(reps.row(i), reps.row(j));
        }
    }
    let noisy_set: std::collections::BTreeSet<usize> = noisy.noise_mask().iter().copied().collect();
    let eff = noisy.labels_effective();
    let orig = noisy.labels_original();
    let (mut p, mut ps) = (0usize, 0usize);
    for &i in noisy.noise_mask() {
        let mut cands: Vec<usize> = (0..n).filter(|j| !noisy_set.contains(j)).collect();
        cands.sort_by(|&a, &b| sim[i][b].partial_cmp(&sim[i][a]).unwrap().then(a.cmp(&b)));
        let top = &cands[..k];
        let mut counts = std::collections::BTreeMap::new();
        for &j in top {
            *counts.entry(eff[j]).or_insert(0usize) += 1;
        }
        let best = *counts.values().max().unwrap();
        let vote = top.iter().map(|&j| eff[j]).find(|l| counts[l] == best).unwrap();
        p += usize::from(vote == orig[i]);
        ps += usize::from(vote == eff[i]);
    }
    let m = noisy.noise_mask().len() as f64;
    (p as f64 / m, ps as f64 / m)
}

/// A noisy synthetic training set and ReLU features from a random network.
/// Rounding the features to a coarse grid creates exact similarity ties.
pub fn knn_fixture(samples: usize, seed: u64, coarse: bool) -> (Matrix, NoisyDataset) {
    let ds = synthetic_blobs(samples, 12, 10, 0.6, seed).unwrap();
    let noisy = inject_label_noise(&ds, 0.2, NoiseMode::UniformAll, seed + 1).unwrap();
    let model = init_model(&[12, 6, 10], &mut Rng::new(seed + 2)).unwrap();
    let cap = model.forward(ds.images()).unwrap();
    let mut reps = cap.penultimate().unwrap().clone();
    if coarse {
        let data: Vec<f64> = reps.data().iter().map(|v| (v * 2.0).round() / 2.0).collect();
        reps = Matrix::new(reps.rows(), reps.cols(), data).unwrap();
    }
    (reps, noisy)
}
