//! One sweep cell: train a width-k network and measure it.

use serde::{Deserialize, Serialize};

use super::record::{CellStatus, SweepRecord};
use super::{SweepConfig, SweepData};
use crate::diagnostics::{
    activation_sparsity, cam_similarity_stats, compute_cams, estimate_richness_capture, knn_noisy_prediction, sparsity_report,
    weight_sparsity, CamSimilarity, KnnReport, RichnessConfig, RichnessReport, SparsityReport, Split,
};
use crate::error::{Error, Result};
use crate::nn::{init_model, param_count, train, ActivationCapture, EpochStats, MlpModel, TrainConfig};
use crate::tensor::{derive_seed, Rng};

/// Everything measured for a cell, persisted as JSON next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSidecar {
    pub record: SweepRecord,
    pub history: Vec<EpochStats>,
    pub cam_input_hidden: Option<CamSimilarity>,
    pub cam_hidden_output: Option<CamSimilarity>,
    pub richness: Option<RichnessReport>,
    pub knn: Option<KnnReport>,
    pub sparsity: Option<SparsityReport>,
    /// Diagnostics that could not be computed, as `name: reason`.
    pub skipped: Vec<String>,
}

impl CellSidecar {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serialises") + "\n"
    }
}

pub struct CellOutput {
    pub sidecar: CellSidecar,
    /// `None` when training failed.
    pub model: Option<MlpModel>,
}

/// Mean cross-entropy and error of captured logits against `labels`.
fn loss_and_error(capture: &ActivationCapture, labels: &[usize]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut wrong = 0usize;
    for ((row, &y), &pred) in capture.logits().row_iter().zip(labels).zip(&capture.predicted) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        loss += max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - row[y];
        wrong += usize::from(pred != y);
    }
    let n = labels.len() as f64;
    (loss / n, wrong as f64 / n)
}

fn keep<T>(skipped: &mut Vec<String>, name: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            skipped.push(format!("{name}: {e}"));
            None
        }
    }
}

/// Trains and measures cell `(k, replicate)`. Training failures are reported
/// through the record's status rather than as an error.
pub fn run_cell(config: &SweepConfig, data: &SweepData, k: usize, replicate: usize) -> CellOutput {
    let classes = data.train.num_classes();
    let widths = [data.train.images().cols(), k, classes];
    let cell_seed = derive_seed(config.train.seed, &[k as u64, replicate as u64]);
    let mut record = SweepRecord::new(k, replicate, param_count(&widths), cell_seed, data.noisy.noise_hash());

    match measure(config, data, &widths, cell_seed, &mut record) {
        Ok((sidecar, model)) => CellOutput {
            sidecar,
            model: Some(model),
        },
        Err(e) => {
            record.status = CellStatus::Failed;
            record.error = Some(e.to_string());
            CellOutput {
                sidecar: CellSidecar {
                    record,
                    history: Vec::new(),
                    cam_input_hidden: None,
                    cam_hidden_output: None,
                    richness: None,
                    knn: None,
                    sparsity: None,
                    skipped: Vec::new(),
                },
                model: None,
            }
        }
    }
}

fn measure(
    config: &SweepConfig,
    data: &SweepData,
    widths: &[usize],
    cell_seed: u64,
    record: &mut SweepRecord,
) -> Result<(CellSidecar, MlpModel)> {
    let model = init_model(widths, &mut Rng::new(derive_seed(cell_seed, &[0])))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(cell_seed, &[1]),
        ..config.train.clone()
    };
    let trained = train(model, data.train.images(), data.train.labels(), &train_cfg)?;
    let model = trained.model;

    let on_train = model.forward(data.train.images())?;
    let on_test = model.forward(data.test.images())?;
    let (train_loss, train_error) = loss_and_error(&on_train, data.train.labels());
    let (test_loss, test_error) = loss_and_error(&on_test, data.test.labels());
    record.train_loss = Some(train_loss);
    record.train_error = Some(train_error);
    record.test_loss = Some(test_loss);
    record.test_error = Some(test_error);
    if !(train_loss.is_finite() && test_loss.is_finite()) {
        return Err(Error::Diverged {
            epoch: config.train.epochs,
            loss: train_loss,
        });
    }

    let diag = &config.diagnostics;
    let pick = |split: Split| match split {
        Split::Train => &on_train,
        Split::Test => &on_test,
    };
    let mut skipped = Vec::new();

    let cam_capture = pick(diag.cam_split);
    let mut cam = |lower: usize, name: &str| {
        let stats = compute_cams(cam_capture, lower).and_then(|set| cam_similarity_stats(&set.cams));
        keep(&mut skipped, name, stats)
    };
    let cam_input_hidden = cam(0, "cam_input_hidden");
    let cam_hidden_output = cam(1, "cam_hidden_output");
    record.cam_sim_input_hidden = cam_input_hidden.as_ref().map(|c| c.mean);
    record.cam_sim_hidden_output = cam_hidden_output.as_ref().map(|c| c.mean);

    let richness_cfg = RichnessConfig {
        seed: derive_seed(cell_seed, &[2, diag.richness.seed]),
        ..diag.richness.clone()
    };
    let richness = keep(
        &mut skipped,
        "richness",
        estimate_richness_capture(pick(diag.richness_split), &richness_cfg),
    );
    record.richness = richness.as_ref().map(|r| r.overall);

    let knn = if data.noisy.noise_mask().is_empty() {
        None
    } else {
        let reps = on_train.penultimate().expect("sweep networks have a hidden layer");
        keep(&mut skipped, "knn", knn_noisy_prediction(reps, &data.noisy, diag.knn_k))
    };
    record.knn_p = knn.as_ref().map(|r| r.p);
    record.knn_p_star = knn.as_ref().map(|r| r.p_star);

    let sparsity = keep(
        &mut skipped,
        "sparsity",
        sparsity_report(&model, pick(diag.sparsity_split), &diag.weight_thresholds),
    );
    let fixed = weight_sparsity(&model, &[0.01, 0.1]);
    record.weight_sparsity_0_01 = Some(fixed[0].ratio);
    record.weight_sparsity_0_1 = Some(fixed[1].ratio);
    record.exact_zero_weights = Some(crate::diagnostics::exact_zero_weights(&model));
    // a network whose hidden units never fire still has an activation ratio
    record.activation_sparsity = activation_sparsity(pick(diag.sparsity_split)).ok();
    record.ndcg = sparsity.as_ref().map(|s| s.ndcg.value);

    Ok((
        CellSidecar {
            record: record.clone(),
            history: trained.history,
            cam_input_hidden,
            cam_hidden_output,
            richness,
            knn,
            sparsity,
            skipped,
        },
        model,
    ))
}
