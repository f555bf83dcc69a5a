//! Classifiers of several depths trained on top of one fixed random
//! ReLU layer.
//!
//! Depth `d` means `d` hidden layers of equal width `w` between the frozen
//! features and the output; depth 0 is the linear classifier on the
//! features. Parameter counts cover the trainable classifier only.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{parallel_map, write_atomic};
use crate::data::{Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_model, param_count, train, TrainConfig};
use crate::tensor::{derive_seed, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenRepConfig {
    #[serde(default = "default_rep_width")]
    pub rep_width: usize,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    /// Hidden-width grid used for every depth without its own entry.
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub depth_widths: BTreeMap<usize, Vec<usize>>,
    /// Adds the depth-0 (linear) row.
    #[serde(default = "default_true")]
    pub include_linear: bool,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Seed of the frozen layer.
    #[serde(default)]
    pub rep_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_rep_width() -> usize {
    20
}

fn default_depths() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn default_widths() -> Vec<usize> {
    vec![4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128]
}

fn default_true() -> bool {
    true
}

fn default_train() -> TrainConfig {
    TrainConfig {
        epochs: 400,
        ..TrainConfig::default()
    }
}

fn default_replicates() -> usize {
    3
}

fn default_workers() -> usize {
    1
}

impl Default for FrozenRepConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl FrozenRepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rep_width == 0 {
            return Err(Error::Config("rep_width must be positive".into()));
        }
        if self.depths.is_empty() && !self.include_linear {
            return Err(Error::Config("no classifier depth selected".into()));
        }
        for &d in &self.depths {
            if d == 0 {
                return Err(Error::Config("depth 0 is selected with include_linear".into()));
            }
            let ws = self.widths_for(d);
            if ws.is_empty() || ws.contains(&0) {
                return Err(Error::Config(format!("depth {d} needs a non-empty grid of positive widths")));
            }
        }
        if self.replicates == 0 || self.workers == 0 {
            return Err(Error::Config("replicates and workers must be at least 1".into()));
        }
        self.train.validate()
    }

    pub fn widths_for(&self, depth: usize) -> &[usize] {
        self.depth_widths.get(&depth).unwrap_or(&self.widths)
    }

    /// Layer widths of the classifier, from the frozen features to the classes.
    pub fn classifier_widths(&self, depth: usize, width: usize, classes: usize) -> Vec<usize> {
        let mut w = vec![self.rep_width];
        w.extend(std::iter::repeat_n(width, depth));
        w.push(classes);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenRepRow {
    pub depth: usize,
    /// Hidden width; 0 for the linear classifier.
    pub width: usize,
    pub params: usize,
    /// Mean over replicates.
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenRepTable {
    pub rep_width: usize,
    /// SHA-256 of the frozen layer's parameters, identical for every row.
    pub rep_hash: String,
    pub rows: Vec<FrozenRepRow>,
}

impl FrozenRepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,width,params,test_accuracy,train_accuracy,replicates\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.depth, r.width, r.params, r.test_accuracy, r.train_accuracy, r.replicates
            ));
        }
        out
    }

    pub fn get(&self, depth: usize, width: usize) -> Option<&FrozenRepRow> {
        self.rows.iter().find(|r| r.depth == depth && r.width == width)
    }
}

/// Largest parameter budget every listed depth reaches (the smallest of
/// their per-depth maxima), with each depth's row closest to it; ties go to
/// the smaller network.
pub fn largest_shared_budget(rows: &[FrozenRepRow], depths: &[usize]) -> Option<(usize, Vec<FrozenRepRow>)> {
    let budget = depths
        .iter()
        .map(|&d| rows.iter().filter(|r| r.depth == d).map(|r| r.params).max())
        .collect::<Option<Vec<_>>>()?
        .into_iter()
        .min()?;
    let picks = depths
        .iter()
        .map(|&d| {
            rows.iter()
                .filter(|r| r.depth == d)
                .min_by_key(|r| (r.params.abs_diff(budget), r.params))
                .cloned()
                .expect("depth has rows")
        })
        .collect();
    Some((budget, picks))
}

/// ReLU features of the frozen layer.
fn features(rep: &crate::nn::MlpModel, data: &Dataset) -> Result<Dataset> {
    let out = rep.forward(data.images())?;
    let relu: Vec<f64> = out.logits().data().iter().map(|v| v.max(0.0)).collect();
    let m = Matrix::new(out.logits().rows(), out.logits().cols(), relu)?;
    Dataset::new(m, data.labels().to_vec(), data.num_classes())
}

pub fn run_frozen_rep_experiment(config: &FrozenRepConfig) -> Result<FrozenRepTable> {
    config.validate()?;
    let (train_set, test_set) = config.dataset.prepare()?;
    let classes = train_set.num_classes();
    let rep = init_model(&[train_set.images().cols(), config.rep_width], &mut Rng::new(config.rep_seed))?;
    let rep_hash = {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in rep.flat_params() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    };
    let train_feats = features(&rep, &train_set)?;
    let test_feats = features(&rep, &test_set)?;

    let mut cells: Vec<(usize, usize)> = Vec::new();
    if config.include_linear {
        cells.push((0, 0));
    }
    for &d in &config.depths {
        cells.extend(config.widths_for(d).iter().map(|&w| (d, w)));
    }
    let jobs: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(d, w)| (0..config.replicates).map(move |r| (d, w, r)))
        .collect();

    let results = parallel_map(config.workers, jobs.len(), |i| -> Result<(f64, f64)> {
        let (d, w, r) = jobs[i];
        let widths = config.classifier_widths(d, w, classes);
        let seed = derive_seed(config.train.seed, &[d as u64, w as u64, r as u64]);
        let model = init_model(&widths, &mut Rng::new(derive_seed(seed, &[0])))?;
        let cfg = TrainConfig {
            seed: derive_seed(seed, &[1]),
            ..config.train.clone()
        };
        let trained = train(model, train_feats.images(), train_feats.labels(), &cfg)?;
        let test = evaluate(&trained.model, test_feats.images(), test_feats.labels())?;
        let train_eval = evaluate(&trained.model, train_feats.images(), train_feats.labels())?;
        Ok((1.0 - test.error, 1.0 - train_eval.error))
    });

    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(cells.len());
    for &(d, w) in &cells {
        let mut test_acc = 0.0;
        let mut train_acc = 0.0;
        for res in results.by_ref().take(config.replicates) {
            let (te, tr) = res?;
            test_acc += te;
            train_acc += tr;
        }
        let n = config.replicates as f64;
        rows.push(FrozenRepRow {
            depth: d,
            width: w,
            params: param_count(&config.classifier_widths(d, w, classes)),
            test_accuracy: test_acc / n,
            train_accuracy: train_acc / n,
            replicates: config.replicates,
        });
    }
    let table = FrozenRepTable {
        rep_width: config.rep_width,
        rep_hash,
        rows,
    };
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let echo = serde_json::to_string_pretty(config)? + "\n";
        write_atomic(&dir.join("frozen_rep_config.json"), echo.as_bytes())?;
        write_atomic(&dir.join("frozen_rep.csv"), table.to_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&table)? + "\n";
        write_atomic(&dir.join("frozen_rep.json"), json.as_bytes())?;
    }
    Ok(table)
}
