//! Flat per-cell records and their replicate summaries, as CSV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One trained network: its size, errors and scalar diagnostics. A metric
/// is `None` when it does not apply (k-NN without noise) or could not be
/// computed for this network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub params: usize,
    pub replicate: usize,
    pub seed: u64,
    pub status: CellStatus,
    pub train_loss: Option<f64>,
    /// Error against the labels the network was trained on.
    pub train_error: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_error: Option<f64>,
    pub cam_sim_input_hidden: Option<f64>,
    pub cam_sim_hidden_output: Option<f64>,
    pub richness: Option<f64>,
    pub knn_p: Option<f64>,
    pub knn_p_star: Option<f64>,
    pub activation_sparsity: Option<f64>,
    pub weight_sparsity_0_1: Option<f64>,
    pub weight_sparsity_0_01: Option<f64>,
    pub ndcg: Option<f64>,
    pub exact_zero_weights: Option<usize>,
    pub noise_hash: String,
    /// Failure message; not part of the CSV row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const RECORD_COLUMNS: [&str; 20] = [
    "k",
    "params",
    "replicate",
    "seed",
    "status",
    "train_loss",
    "train_error",
    "test_loss",
    "test_error",
    "cam_sim_input_hidden",
    "cam_sim_hidden_output",
    "richness",
    "knn_P",
    "knn_P_star",
    "activation_sparsity",
    "weight_sparsity@0.1",
    "weight_sparsity@0.01",
    "ndcg",
    "exact_zero_weights",
    "noise_hash",
];

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepRecord {
    pub fn new(k: usize, replicate: usize, params: usize, seed: u64, noise_hash: String) -> Self {
        Self {
            k,
            params,
            replicate,
            seed,
            status: CellStatus::Ok,
            train_loss: None,
            train_error: None,
            test_loss: None,
            test_error: None,
            cam_sim_input_hidden: None,
            cam_sim_hidden_output: None,
            richness: None,
            knn_p: None,
            knn_p_star: None,
            activation_sparsity: None,
            weight_sparsity_0_1: None,
            weight_sparsity_0_01: None,
            ndcg: None,
            exact_zero_weights: None,
            noise_hash,
            error: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn csv_row(&self) -> String {
        let status = match self.status {
            CellStatus::Ok => "ok",
            CellStatus::Failed => "failed",
        };
        let fields = [
            self.k.to_string(),
            self.params.to_string(),
            self.replicate.to_string(),
            self.seed.to_string(),
            status.to_string(),
            fmt_opt(self.train_loss),
            fmt_opt(self.train_error),
            fmt_opt(self.test_loss),
            fmt_opt(self.test_error),
            fmt_opt(self.cam_sim_input_hidden),
            fmt_opt(self.cam_sim_hidden_output),
            fmt_opt(self.richness),
            fmt_opt(self.knn_p),
            fmt_opt(self.knn_p_star),
            fmt_opt(self.activation_sparsity),
            fmt_opt(self.weight_sparsity_0_1),
            fmt_opt(self.weight_sparsity_0_01),
            fmt_opt(self.ndcg),
            self.exact_zero_weights.map(|v| v.to_string()).unwrap_or_default(),
            self.noise_hash.clone(),
        ];
        fields.join(",") + "\n"
    }
}

pub fn write_records_csv(records: &[SweepRecord]) -> String {
    let mut out = RECORD_COLUMNS.join(",") + "\n";
    for r in records {
        out.push_str(&r.csv_row());
    }
    out
}

/// Replicate means for one width. Failed cells and missing metrics are
/// left out of the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k: usize,
    pub params: usize,
    pub replicates: usize,
    pub failed: usize,
    pub train_loss: Option<f64>,
    pub train_error: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_error: Option<f64>,
    /// Sample standard deviation across replicates.
    pub test_error_std: Option<f64>,
    pub cam_sim_input_hidden: Option<f64>,
    pub cam_sim_hidden_output: Option<f64>,
    pub richness: Option<f64>,
    pub knn_p: Option<f64>,
    pub knn_p_star: Option<f64>,
    pub activation_sparsity: Option<f64>,
    pub weight_sparsity_0_1: Option<f64>,
    pub weight_sparsity_0_01: Option<f64>,
    pub ndcg: Option<f64>,
}

pub const SUMMARY_COLUMNS: [&str; 20] = [
    "k",
    "params",
    "replicates",
    "failed",
    "train_loss",
    "train_error",
    "test_loss",
    "test_error",
    "test_error_std",
    "cam_sim_input_hidden",
    "cam_sim_hidden_output",
    "richness",
    "knn_P",
    "knn_P_star",
    "activation_sparsity",
    "weight_sparsity@0.1",
    "weight_sparsity@0.01",
    "ndcg",
    "interpolates",
    "n_train",
];

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Groups records by `k` (ascending) and averages each metric.
pub fn summarize(records: &[SweepRecord]) -> Vec<SummaryRow> {
    let mut by_k: BTreeMap<usize, Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        by_k.entry(r.k).or_default().push(r);
    }
    by_k.into_iter()
        .map(|(k, group)| {
            let ok: Vec<&SweepRecord> = group.iter().copied().filter(|r| r.is_ok()).collect();
            let pick = |f: fn(&SweepRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            SummaryRow {
                k,
                params: group[0].params,
                replicates: ok.len(),
                failed: group.len() - ok.len(),
                train_loss: mean(&pick(|r| r.train_loss)),
                train_error: mean(&pick(|r| r.train_error)),
                test_loss: mean(&pick(|r| r.test_loss)),
                test_error: mean(&pick(|r| r.test_error)),
                test_error_std: std_dev(&pick(|r| r.test_error)),
                cam_sim_input_hidden: mean(&pick(|r| r.cam_sim_input_hidden)),
                cam_sim_hidden_output: mean(&pick(|r| r.cam_sim_hidden_output)),
                richness: mean(&pick(|r| r.richness)),
                knn_p: mean(&pick(|r| r.knn_p)),
                knn_p_star: mean(&pick(|r| r.knn_p_star)),
                activation_sparsity: mean(&pick(|r| r.activation_sparsity)),
                weight_sparsity_0_1: mean(&pick(|r| r.weight_sparsity_0_1)),
                weight_sparsity_0_01: mean(&pick(|r| r.weight_sparsity_0_01)),
                ndcg: mean(&pick(|r| r.ndcg)),
            }
        })
        .collect()
}

/// `interpolates` is 1 when the mean train error is at most `1/train_size`.
pub fn write_summary_csv(rows: &[SummaryRow], train_size: usize) -> String {
    let limit = 1.0 / train_size.max(1) as f64;
    let mut out = SUMMARY_COLUMNS.join(",") + "\n";
    for r in rows {
        let interpolates = r.train_error.map(|e| u8::from(e <= limit).to_string()).unwrap_or_default();
        let fields = [
            r.k.to_string(),
            r.params.to_string(),
            r.replicates.to_string(),
            r.failed.to_string(),
            fmt_opt(r.train_loss),
            fmt_opt(r.train_error),
            fmt_opt(r.test_loss),
            fmt_opt(r.test_error),
            fmt_opt(r.test_error_std),
            fmt_opt(r.cam_sim_input_hidden),
            fmt_opt(r.cam_sim_hidden_output),
            fmt_opt(r.richness),
            fmt_opt(r.knn_p),
            fmt_opt(r.knn_p_star),
            fmt_opt(r.activation_sparsity),
            fmt_opt(r.weight_sparsity_0_1),
            fmt_opt(r.weight_sparsity_0_01),
            fmt_opt(r.ndcg),
            interpolates,
            train_size.to_string(),
        ];
        out.push_str(&(fields.join(",") + "\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_matches_header_width() {
        let mut r = SweepRecord::new(4, 1, 3190, 77, "abc".into());
        r.test_error = Some(0.25);
        let row = r.csv_row();
        assert_eq!(row.trim_end().split(',').count(), RECORD_COLUMNS.len());
        assert!(row.starts_with("4,3190,1,77,ok,,,,0.25,"));
        assert!(row.ends_with(",abc\n"));
    }

    #[test]
    fn summary_skips_failures_and_missing_values() {
        let mut a = SweepRecord::new(4, 0, 10, 1, String::new());
        a.test_error = Some(0.2);
        let mut b = SweepRecord::new(4, 1, 10, 2, String::new());
        b.test_error = Some(0.4);
        b.knn_p = Some(0.5);
        let mut c = SweepRecord::new(4, 2, 10, 3, String::new());
        c.status = CellStatus::Failed;
        c.test_error = Some(9.0);
        let s = summarize(&[a, b, c]);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].replicates, s[0].failed), (2, 1));
        assert!((s[0].test_error.unwrap() - 0.3).abs() < 1e-15);
        assert!((s[0].test_error_std.unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(s[0].knn_p, Some(0.5));
        assert_eq!(s[0].richness, None);
        let csv = write_summary_csv(&s, 100);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), SUMMARY_COLUMNS.len());
    }
}
