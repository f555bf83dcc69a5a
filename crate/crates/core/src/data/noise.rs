//! Once-sampled label noise and its persisted record.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Rng;

/// How a corrupted label is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Uniform over every class, the true one included.
    #[default]
    UniformAll,
    /// Uniform over the classes other than the true one.
    UniformOther,
}

/// A training set whose labels were corrupted exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    clean: Dataset,
    labels_effective: Vec<usize>,
    /// Sorted indices whose label was redrawn.
    noise_mask: Vec<usize>,
    p: f64,
    seed: u64,
    mode: NoiseMode,
}

/// Each sample independently enters the noise mask with probability `p`
/// and has its label redrawn according to `mode`.
pub fn inject_label_noise(dataset: &Dataset, p: f64, mode: NoiseMode, seed: u64) -> Result<NoisyDataset> {
    if dataset.is_noisy() {
        return Err(Error::AlreadyNoisy);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("noise probability {p} outside [0, 1]")));
    }
    let classes = dataset.num_classes();
    if mode == NoiseMode::UniformOther && classes < 2 {
        return Err(Error::InvalidArgument("uniform_other noise needs at least two classes".into()));
    }
    let mut rng = Rng::new(seed);
    let mut labels = dataset.labels().to_vec();
    let mut mask = Vec::new();
    for (i, label) in labels.iter_mut().enumerate() {
        if rng.bernoulli(p) {
            mask.push(i);
            *label = match mode {
                NoiseMode::UniformAll => rng.below(classes),
                NoiseMode::UniformOther => {
                    let r = rng.below(classes - 1);
                    if r >= *label {
                        r + 1
                    } else {
                        r
                    }
                }
            };
        }
    }
    Ok(NoisyDataset {
        clean: dataset.clone(),
        labels_effective: labels,
        noise_mask: mask,
        p,
        seed,
        mode,
    })
}

impl NoisyDataset {
    /// Assembles a corruption from explicit parts, validating consistency.
    pub fn from_parts(
        clean: Dataset,
        labels_effective: Vec<usize>,
        noise_mask: Vec<usize>,
        p: f64,
        seed: u64,
        mode: NoiseMode,
    ) -> Result<Self> {
        if clean.is_noisy() {
            return Err(Error::AlreadyNoisy);
        }
        let n = clean.len();
        let classes = clean.num_classes();
        let consistent = labels_effective.len() == n
            && labels_effective.iter().all(|&l| l < classes)
            && noise_mask.windows(2).all(|w| w[0] < w[1])
            && noise_mask.last().is_none_or(|&i| i < n)
            && (0..n).all(|i| noise_mask.binary_search(&i).is_ok() || labels_effective[i] == clean.labels()[i]);
        if !consistent || !(0.0..=1.0).contains(&p) {
            return Err(Error::Malformed {
                what: "noisy dataset",
                detail: "labels or mask inconsistent with the dataset".into(),
            });
        }
        Ok(Self {
            clean,
            labels_effective,
            noise_mask,
            p,
            seed,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    pub fn images(&self) -> &crate::tensor::Matrix {
        self.clean.images()
    }

    pub fn clean(&self) -> &Dataset {
        &self.clean
    }

    pub fn labels_original(&self) -> &[usize] {
        self.clean.labels()
    }

    pub fn labels_effective(&self) -> &[usize] {
        &self.labels_effective
    }

    pub fn noise_mask(&self) -> &[usize] {
        &self.noise_mask
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.clean.num_classes()
    }

    /// Indices outside the noise mask, ascending.
    pub fn clean_indices(&self) -> Vec<usize> {
        let mut noisy = self.noise_mask.iter().peekable();
        (0..self.len())
            .filter(|i| {
                if noisy.peek() == Some(&i) {
                    noisy.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }

    /// The dataset as seen by training: effective labels, marked noisy so it
    /// cannot be corrupted a second time.
    pub fn training_set(&self) -> Dataset {
        self.clean.with_labels(self.labels_effective.clone(), true)
    }

    /// Hash identifying this particular corruption (mask + labels + params).
    pub fn noise_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.clean.content_hash());
        h.update(self.p.to_le_bytes());
        h.update(self.seed.to_le_bytes());
        h.update([self.mode as u8]);
        for &i in &self.noise_mask {
            h.update((i as u64).to_le_bytes());
        }
        for &l in &self.labels_effective {
            h.update((l as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

const RECORD_VERSION: u32 = 1;

/// JSON sidecar persisting a corruption so it is never resampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRecord {
    pub version: u32,
    /// Content hash of the clean training subset.
    pub dataset_hash: String,
    /// Row of each training sample in the source file.
    pub source_indices: Vec<usize>,
    pub seed: u64,
    pub p: f64,
    pub mode: NoiseMode,
    pub mask: Vec<usize>,
    pub labels_original: Vec<usize>,
    pub labels_effective: Vec<usize>,
    pub noise_hash: String,
    /// SHA-256 of this record serialised with an empty checksum.
    pub checksum: String,
}

impl NoiseRecord {
    pub fn from_dataset(noisy: &NoisyDataset) -> Self {
        let mut rec = NoiseRecord {
            version: RECORD_VERSION,
            dataset_hash: noisy.clean.content_hash_hex(),
            source_indices: noisy.clean.origin().to_vec(),
            seed: noisy.seed,
            p: noisy.p,
            mode: noisy.mode,
            mask: noisy.noise_mask.clone(),
            labels_original: noisy.labels_original().to_vec(),
            labels_effective: noisy.labels_effective.clone(),
            noise_hash: noisy.noise_hash(),
            checksum: String::new(),
        };
        rec.checksum = rec.compute_checksum();
        rec
    }

    fn compute_checksum(&self) -> String {
        let mut copy = self.clone();
        copy.checksum.clear();
        let bytes = serde_json::to_vec(&copy).expect("record serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            version: u32,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| Error::Malformed {
            what: "noise record",
            detail: e.to_string(),
        })?;
        if v.version != RECORD_VERSION {
            return Err(Error::VersionMismatch {
                what: "noise record",
                found: v.version,
                expected: RECORD_VERSION,
            });
        }
        let rec: NoiseRecord = serde_json::from_str(text).map_err(|e| Error::Malformed {
            what: "noise record",
            detail: e.to_string(),
        })?;
        if rec.checksum != rec.compute_checksum() {
            return Err(Error::Checksum("noise record".into()));
        }
        Ok(rec)
    }

    /// Re-attaches the recorded corruption to its clean dataset.
    ///
    /// Refuses a dataset whose content hash differs from the recorded one.
    pub fn apply(&self, clean: &Dataset) -> Result<NoisyDataset> {
        let found = clean.content_hash_hex();
        if found != self.dataset_hash {
            return Err(Error::HashMismatch {
                expected: self.dataset_hash.clone(),
                found,
            });
        }
        if self.labels_original != clean.labels() {
            return Err(Error::Malformed {
                what: "noise record",
                detail: "original labels differ from the dataset".into(),
            });
        }
        let noisy = NoisyDataset::from_parts(
            clean.clone(),
            self.labels_effective.clone(),
            self.mask.clone(),
            self.p,
            self.seed,
            self.mode,
        )?;
        if noisy.noise_hash() != self.noise_hash {
            return Err(Error::Checksum("noise record hash".into()));
        }
        Ok(noisy)
    }
}

pub fn save_noise_record(noisy: &NoisyDataset, path: &Path) -> Result<()> {
    std::fs::write(path, NoiseRecord::from_dataset(noisy).to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_noise_record(path: &Path) -> Result<NoiseRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NoiseRecord::from_json(&text)
}
