//! Measurements over captured activations. Every function here is a pure
//! function of its inputs (plus an explicit seed where sampling is involved).

mod cam;
mod knn;
mod richness;
mod sparsity;

use serde::{Deserialize, Serialize};

pub use cam::{cam_similarity_stats, compute_cams, Cam, CamSet, CamSimilarity};
pub use knn::{knn_noisy_prediction, majority, KnnReport};
pub use richness::{
    estimate_richness, estimate_richness_capture, group_richness, RichnessConfig, RichnessMode, RichnessReport,
    MAX_EXHAUSTIVE_GROUP,
};
pub use sparsity::{
    activation_sparsity, activation_sparsity_of, class_ndcg, class_ndcg_of, exact_zero_weights, rescaled_dcg,
    sparsity_report, weight_sparsity, NdcgReport, SparsityReport, ThresholdRatio,
};

/// Which data split a diagnostic is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Neighbour count for the noisy-label k-NN vote.
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default)]
    pub richness: RichnessConfig,
    #[serde(default = "default_thresholds")]
    pub weight_thresholds: Vec<f64>,
    /// CAMs are computed on the training set by default.
    #[serde(default = "train_split")]
    pub cam_split: Split,
    /// Richness is computed on unseen data by default.
    #[serde(default = "test_split")]
    pub richness_split: Split,
    /// Activation ratio and NDCG are computed on test points by default.
    #[serde(default = "test_split")]
    pub sparsity_split: Split,
}

fn default_knn_k() -> usize {
    10
}

fn default_thresholds() -> Vec<f64> {
    vec![0.1, 0.01]
}

fn train_split() -> Split {
    Split::Train
}

fn test_split() -> Split {
    Split::Test
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            knn_k: default_knn_k(),
            richness: RichnessConfig::default(),
            weight_thresholds: default_thresholds(),
            cam_split: Split::Train,
            richness_split: Split::Test,
            sparsity_split: Split::Test,
        }
    }
}
