//! Width sweeps: train → capture → diagnose → persist, one cell per
//! `(width k, replicate)`.
//!
//! Output directory layout:
//!
//! ```text
//! config.json          resolved configuration echo
//! noise_record.json    the sweep's single label corruption
//! records.csv          one row per cell (canonical order once the sweep ends)
//! summary.csv          replicate means keyed by k
//! cells/k00015_r00.json    full per-cell sidecar (record, history, reports)
//! checkpoints/k00015_r00.bin
//! ```
//!
//! Completed cells are detected through their sidecars, so an interrupted
//! sweep resumes where it stopped.

mod cell;
mod frozen;
mod record;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

pub use cell::{run_cell, CellOutput, CellSidecar};
pub use frozen::{
    largest_shared_budget, run_frozen_rep_experiment, FrozenRepConfig, FrozenRepRow, FrozenRepTable,
};
pub use record::{
    summarize, write_records_csv, write_summary_csv, CellStatus, SummaryRow, SweepRecord, RECORD_COLUMNS,
    SUMMARY_COLUMNS,
};

use crate::data::{inject_label_noise, load_noise_record, save_noise_record, Dataset, DatasetSpec, NoiseMode, NoisyDataset};
use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Hidden widths, strictly increasing.
    pub widths: Vec<usize>,
    #[serde(default)]
    pub noise_p: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Size of the worker pool running cells.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_true")]
    pub checkpoints: bool,
    pub output_dir: PathBuf,
}

fn default_replicates() -> usize {
    3
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::Config("widths must not be empty".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("widths must be positive".into()));
        }
        if !self.widths.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!("widths must be strictly increasing: {:?}", self.widths)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::Config(format!("noise_p {} outside [0, 1]", self.noise_p)));
        }
        if self.dataset.train_size == 0 {
            return Err(Error::Config("dataset.train_size must be positive".into()));
        }
        self.train.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Data shared by every cell of a sweep.
pub struct SweepData {
    pub noisy: NoisyDataset,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub summary: Vec<SummaryRow>,
    pub threshold: Option<usize>,
}

pub fn cell_name(k: usize, replicate: usize) -> String {
    format!("k{k:05}_r{replicate:02}")
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads data and the sweep's noise record, creating the record on first use.
pub fn prepare_data(config: &SweepConfig) -> Result<SweepData> {
    let (clean, test) = config.dataset.prepare()?;
    let record_path = config.output_dir.join("noise_record.json");
    let noisy = if record_path.exists() {
        load_noise_record(&record_path)?.apply(&clean)?
    } else {
        let noisy = inject_label_noise(&clean, config.noise_p, config.noise_mode, config.noise_seed)?;
        save_noise_record(&noisy, &record_path)?;
        noisy
    };
    if noisy.p() != config.noise_p || noisy.mode() != config.noise_mode || noisy.seed() != config.noise_seed {
        return Err(Error::Config("noise record on disk does not match the configured noise".into()));
    }
    Ok(SweepData {
        train: noisy.training_set(),
        noisy,
        test,
    })
}

fn load_sidecar(path: &Path) -> Result<CellSidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        what: "cell sidecar",
        detail: format!("{}: {e}", path.display()),
    })
}

/// Every sidecar under `dir/cells`, sorted by `(k, replicate)`.
pub fn load_sidecars(dir: &Path) -> Result<Vec<CellSidecar>> {
    let cells = dir.join("cells");
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(&cells) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(&cells, e)),
    };
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&cells, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(load_sidecar(&path)?);
        }
    }
    out.sort_by_key(|s| (s.record.k, s.record.replicate));
    Ok(out)
}

/// Rewrites `records.csv` and `summary.csv` from the sidecars in `dir`.
pub fn rebuild_tables(dir: &Path, train_size: usize) -> Result<(Vec<SweepRecord>, Vec<SummaryRow>)> {
    let records: Vec<SweepRecord> = load_sidecars(dir)?.into_iter().map(|s| s.record).collect();
    let summary = summarize(&records);
    write_atomic(&dir.join("records.csv"), write_records_csv(&records).as_bytes())?;
    write_atomic(&dir.join("summary.csv"), write_summary_csv(&summary, train_size).as_bytes())?;
    Ok((records, summary))
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    run_sweep_with(config, |_| {})
}

/// Runs every pending cell, calling `on_cell` as each one is persisted.
pub fn run_sweep_with(config: &SweepConfig, mut on_cell: impl FnMut(&SweepRecord)) -> Result<SweepOutcome> {
    config.validate()?;
    let out = &config.output_dir;
    create_dir(out)?;
    create_dir(&out.join("cells"))?;
    if config.checkpoints {
        create_dir(&out.join("checkpoints"))?;
    }

    let echo = config.to_json();
    let echo_path = out.join("config.json");
    if echo_path.exists() {
        let existing = std::fs::read_to_string(&echo_path).map_err(|e| Error::io(&echo_path, e))?;
        // the worker count does not influence results
        let mut existing_cfg = SweepConfig::from_json(&existing)?;
        existing_cfg.workers = config.workers;
        if existing_cfg != *config {
            return Err(Error::Config(format!(
                "{} already holds a sweep with a different configuration",
                out.display()
            )));
        }
    } else {
        write_atomic(&echo_path, echo.as_bytes())?;
    }

    let data = prepare_data(config)?;
    let n = data.noisy.len();

    let done: BTreeMap<(usize, usize), ()> = load_sidecars(out)?
        .into_iter()
        .map(|s| ((s.record.k, s.record.replicate), ()))
        .collect();
    let pending: Vec<(usize, usize)> = config
        .widths
        .iter()
        .flat_map(|&k| (0..config.replicates).map(move |r| (k, r)))
        .filter(|cell| !done.contains_key(cell))
        .collect();

    rebuild_tables(out, n)?;
    let records_path = out.join("records.csv");

    if !pending.is_empty() {
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<CellOutput>();
        let workers = config.workers.min(pending.len());
        std::thread::scope(|scope| -> Result<()> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, pending, data) = (&next, &pending, &data);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(k, r)) = pending.get(i) else { break };
                    if tx.send(run_cell(config, data, k, r)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            // single writer: only this thread touches the output files
            for output in rx {
                let name = cell_name(output.sidecar.record.k, output.sidecar.record.replicate);
                if let (true, Some(model)) = (config.checkpoints, &output.model) {
                    let hash = data.noisy.clean().content_hash();
                    crate::nn::save_checkpoint(&out.join("checkpoints").join(format!("{name}.bin")), model, Some(&hash))?;
                }
                write_atomic(
                    &out.join("cells").join(format!("{name}.json")),
                    output.sidecar.to_json().as_bytes(),
                )?;
                append_record(&records_path, &output.sidecar.record)?;
                on_cell(&output.sidecar.record);
            }
            Ok(())
        })?;
    }

    let (records, summary) = rebuild_tables(out, n)?;
    Ok(SweepOutcome {
        threshold: threshold_from_summary(&summary, n),
        records,
        summary,
    })
}

/// `f(0..jobs)` on a pool of `workers` threads, results in job order.
pub(crate) fn parallel_map<T: Send>(workers: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.max(1)) {
            let (tx, next, f) = (tx.clone(), &next, &f);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs || tx.send((i, f(i))).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut out: Vec<(usize, T)> = rx.into_iter().collect();
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, v)| v).collect()
}

fn append_record(path: &Path, record: &SweepRecord) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(record.csv_row().as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Smallest `k` whose replicate-mean train error is at most `1/N`.
pub fn threshold_from_summary(summary: &[SummaryRow], train_size: usize) -> Option<usize> {
    let limit = 1.0 / train_size.max(1) as f64;
    summary
        .iter()
        .filter(|row| row.train_error.is_some_and(|e| e <= limit))
        .map(|row| row.k)
        .min()
}

/// Interpolation threshold of a set of records (grouped and averaged by `k`).
pub fn detect_interpolation_threshold(records: &[SweepRecord], train_size: usize) -> Option<usize> {
    threshold_from_summary(&summarize(records), train_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, train_error: f64) -> SweepRecord {
        let mut r = SweepRecord::new(k, 0, 0, 0, String::new());
        r.train_error = Some(train_error);
        r
    }

    #[test]
    fn threshold_is_first_zero() {
        let recs = vec![rec(5, 0.3), rec(10, 0.1), rec(15, 0.0), rec(20, 0.0)];
        assert_eq!(detect_interpolation_threshold(&recs, 4000), Some(15));
        let never = vec![rec(5, 0.3), rec(10, 0.1)];
        assert_eq!(detect_interpolation_threshold(&never, 4000), None);
    }

    #[test]
    fn threshold_averages_replicates() {
        let mut recs = vec![rec(5, 0.0), rec(5, 0.01), rec(8, 0.0), rec(8, 0.0)];
        recs[1].replicate = 1;
        recs[3].replicate = 1;
        assert_eq!(detect_interpolation_threshold(&recs, 1000), Some(8));
        assert_eq!(detect_interpolation_threshold(&recs, 100), Some(5));
    }

    #[test]
    fn config_validation() {
        let mut cfg: SweepConfig = serde_json::from_str(
            r#"{"widths": [1, 2], "train": {"epochs": 1}, "output_dir": "/tmp/x"}"#,
        )
        .unwrap();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.train.batch_size, 128);
        cfg.widths = vec![2, 2];
        assert!(cfg.validate().is_err());
        cfg.widths = vec![];
        assert!(cfg.validate().is_err());
        assert!(SweepConfig::from_json(r#"{"widths": [1], "train": {"epochs": 1}, "output_dir": "x", "bogus": 1}"#).is_err());
    }
}
