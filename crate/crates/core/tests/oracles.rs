mod common;

use common::*;
use ddlab::data::{inject_label_noise, synthetic_blobs, NoiseMode};
use ddlab::diagnostics::{
    cam_similarity_stats, compute_cams, estimate_richness, group_richness, knn_noisy_prediction, RichnessConfig,
    RichnessMode,
};
use ddlab::nn::init_model;
use ddlab::tensor::{Matrix, Rng};

#[test]
fn analytic_gradients_match_finite_differences() {
    let (good, total) = gradient_check_suite(2024);
    assert!(good as f64 >= 0.99 * total as f64, "{good}/{total} coordinates agree");
}

#[test]
fn six_sample_batch_gradient_check() {
    let model = init_model(&[7, 5, 4], &mut Rng::new(8)).unwrap();
    let mut rng = Rng::new(9);
    let batch = Matrix::new(6, 7, (0..42).map(|_| rng.uniform_in(-2.0, 2.0)).collect()).unwrap();
    let (good, total) = gradient_agreement(&model, &batch, &[0, 1, 2, 3, 0, 1], 1e-5, 1e-4);
    assert!(good as f64 >= 0.99 * total as f64, "{good}/{total}");
}

#[test]
fn cams_match_naive_accumulation() {
    let ds = synthetic_blobs(30, 9, 10, 0.7, 4).unwrap();
    let model = init_model(&[9, 7, 10], &mut Rng::new(5)).unwrap();
    let cap = model.forward(ds.images()).unwrap();
    for lower in 0..2 {
        let set = compute_cams(&cap, lower).unwrap();
        for cam in &set.cams {
            let oracle = naive_cam(&cap.layers[lower], &cap.layers[lower + 1], &cap.predicted, cam.class_id).unwrap();
            for (a, row) in oracle.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    assert!((cam.matrix.get(a, b) - v).abs() <= 1e-12);
                }
            }
        }
        for c in &set.empty_classes {
            assert!(naive_cam(&cap.layers[lower], &cap.layers[lower + 1], &cap.predicted, *c).is_none());
        }
        if let Ok(stats) = cam_similarity_stats(&set.cams) {
            for row in &stats.pairwise {
                assert!(row.iter().flatten().all(|s| (-1.0..=1.0).contains(s)));
            }
        }
    }
}

fn random_acts(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform_in(-0.5, 1.0).max(0.0)).collect()).unwrap()
}

#[test]
fn richness_sampling_never_beats_enumeration() {
    for seed in 0..20 {
        let g = 4 + (seed as usize % 9);
        let w = 1 + (seed as usize % 4);
        let acts = random_acts(g, w, seed);
        let group: Vec<usize> = (0..g).collect();
        let sup = exhaustive_sup(&acts, &group);
        assert!((sup - closed_form_sup(&acts, &group)).abs() < 1e-12);

        let sampled = RichnessConfig {
            group_size: g,
            draws: 50,
            seed,
            ..RichnessConfig::default()
        };
        assert!(group_richness(&acts, &group, &sampled, seed).unwrap() <= sup);

        let full = RichnessConfig {
            exhaustive: true,
            ..sampled
        };
        assert_eq!(group_richness(&acts, &group, &full, seed).unwrap(), sup);
    }
}

#[test]
fn richness_report_uses_enumeration_per_class() {
    let acts = random_acts(40, 3, 77);
    let predicted: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let cfg = RichnessConfig {
        group_size: 10,
        exhaustive: true,
        mode: RichnessMode::Mean,
        ..RichnessConfig::default()
    };
    let report = estimate_richness(&acts, &predicted, 2, &cfg).unwrap();
    for class in 0..2 {
        let members: Vec<usize> = (0..40).filter(|i| i % 2 == class).collect();
        let expected = members.chunks_exact(10).map(|g| exhaustive_sup(&acts, g)).sum::<f64>() / 2.0;
        assert!((report.per_class[class].unwrap() - expected).abs() < 1e-15);
    }
}

#[test]
fn knn_matches_brute_force_oracle() {
    for (samples, seed, coarse) in [(200, 1, false), (200, 2, true), (300, 3, false), (300, 4, true)] {
        let (reps, noisy) = knn_fixture(samples, seed, coarse);
        for k in [1, 4, 10] {
            let report = knn_noisy_prediction(&reps, &noisy, k).unwrap();
            let (p, p_star) = brute_force_knn(&reps, &noisy, k);
            assert_eq!((report.p, report.p_star), (p, p_star), "samples={samples} seed={seed} k={k}");
            assert_eq!(report.m, noisy.noise_mask().len());
        }
    }
}

#[test]
fn knn_on_clean_data_is_refused() {
    let ds = synthetic_blobs(40, 4, 10, 0.5, 1).unwrap();
    let clean = inject_label_noise(&ds, 0.0, NoiseMode::UniformAll, 1).unwrap();
    let err = knn_noisy_prediction(ds.images(), &clean, 3).unwrap_err();
    assert_eq!(err.to_string(), "no noisy samples");
}
