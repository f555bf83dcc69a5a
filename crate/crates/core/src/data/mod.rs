//! MNIST ingestion, seeded sub-sampling and persistent label noise.

mod idx;
mod noise;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx, IdxImages, IMAGES_MAGIC, LABELS_MAGIC};
pub use noise::{inject_label_noise, load_noise_record, save_noise_record, NoiseMode, NoiseRecord, NoisyDataset};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// Environment variable naming the default directory holding the IDX files.
pub const DATA_DIR_ENV: &str = "DDLAB_DATA_DIR";

/// Images (one row per sample) with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    /// Row index of each sample in the file it was loaded from.
    origin: Vec<usize>,
    /// Labels already carry injected noise.
    noisy: bool,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        let origin = (0..labels.len()).collect();
        Ok(Self {
            images,
            labels,
            num_classes,
            origin,
            noisy: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    /// Rows `indices` of this dataset, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "sample index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Ok(Dataset {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            origin: indices.iter().map(|&i| self.origin[i]).collect(),
            noisy: self.noisy,
        })
    }

    /// `n` samples drawn without replacement.
    pub fn subsample(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {n} samples from a dataset of {}",
                self.len()
            )));
        }
        let mut perm = rng.permutation(self.len());
        perm.truncate(n);
        self.select(&perm)
    }

    /// SHA-256 over shape, pixel bits and labels.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"ddlab-dataset-v1");
        h.update((self.images.rows() as u64).to_le_bytes());
        h.update((self.images.cols() as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for v in self.images.data() {
            h.update(v.to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn content_hash_hex(&self) -> String {
        hex::encode(self.content_hash())
    }

    pub(crate) fn with_labels(&self, labels: Vec<usize>, noisy: bool) -> Dataset {
        Dataset {
            images: self.images.clone(),
            labels,
            num_classes: self.num_classes,
            origin: self.origin.clone(),
            noisy,
        }
    }
}

/// Well-separated Gaussian blobs clipped to `[0, 1]`, for smoke runs and tests.
pub fn synthetic_blobs(samples: usize, features: usize, classes: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || features == 0 {
        return Err(Error::InvalidArgument("synthetic data needs classes and features".into()));
    }
    let mut rng = Rng::new(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| rng.uniform()).collect())
        .collect();
    let mut data = Vec::with_capacity(samples * features);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let c = i % classes;
        for &m in &centres[c] {
            // sum of uniforms: cheap bell-shaped noise
            let e = (rng.uniform() + rng.uniform() + rng.uniform() - 1.5) * spread;
            data.push((m + e).clamp(0.0, 1.0));
        }
        labels.push(c);
    }
    Dataset::new(Matrix::new(samples, features, data)?, labels, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// MNIST-style IDX files in a directory (`train-*` and `t10k-*`, optionally `.gz`).
    Idx {
        /// Falls back to `$DDLAB_DATA_DIR`, then `data/mnist`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
    },
    Synthetic {
        train_pool: usize,
        test: usize,
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
}

fn default_features() -> usize {
    784
}

fn default_spread() -> f64 {
    0.8
}

/// Where the data comes from and how the training subset is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Training subset size `N`.
    pub train_size: usize,
    /// Optional cap on the test set (first `n` test samples).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            source: DataSource::Idx { dir: None },
            train_size: 4000,
            test_size: None,
            seed: 0,
        }
    }
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(candidate);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found"),
    ))
}

pub fn resolve_data_dir(dir: Option<&Path>) -> PathBuf {
    dir.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

/// Full training pool and test set for a source.
pub fn load_pools(source: &DataSource) -> Result<(Dataset, Dataset)> {
    match source {
        DataSource::Idx { dir } => {
            let dir = resolve_data_dir(dir.as_deref());
            let train = load_idx(
                &locate(&dir, "train-images-idx3-ubyte")?,
                &locate(&dir, "train-labels-idx1-ubyte")?,
            )?;
            let test = load_idx(
                &locate(&dir, "t10k-images-idx3-ubyte")?,
                &locate(&dir, "t10k-labels-idx1-ubyte")?,
            )?;
            Ok((train, test))
        }
        DataSource::Synthetic {
            train_pool,
            test,
            features,
            spread,
        } => {
            // both splits come from one draw so they share class centres
            let all = synthetic_blobs(train_pool + test, *features, 10, *spread, 0x5EED)?;
            let train_idx: Vec<usize> = (0..*train_pool).collect();
            let test_idx: Vec<usize> = (*train_pool..train_pool + test).collect();
            let mut test_set = all.select(&test_idx)?;
            test_set.origin = (0..*test).collect();
            Ok((all.select(&train_idx)?, test_set))
        }
    }
}

impl DatasetSpec {
    /// Clean training subset of size `train_size` and the (possibly capped) test set.
    pub fn prepare(&self) -> Result<(Dataset, Dataset)> {
        let (pool, test) = load_pools(&self.source)?;
        let train = pool.subsample(self.train_size, &mut Rng::new(self.seed))?;
        let test = match self.test_size {
            Some(n) if n < test.len() => test.select(&(0..n).collect::<Vec<_>>())?,
            _ => test,
        };
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_boundaries() {
        let ds = synthetic_blobs(50, 4, 10, 0.5, 1).unwrap();
        let all = ds.subsample(50, &mut Rng::new(3)).unwrap();
        let mut o = all.origin().to_vec();
        o.sort_unstable();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
        assert!(ds.subsample(51, &mut Rng::new(3)).is_err());
        let a = ds.subsample(20, &mut Rng::new(8)).unwrap();
        let b = ds.subsample(20, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
        let mut uniq = a.origin().to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 20);
    }

    #[test]
    fn hash_tracks_content() {
        let ds = synthetic_blobs(30, 4, 10, 0.5, 1).unwrap();
        assert_eq!(ds.content_hash(), ds.clone().content_hash());
        let mut labels = ds.labels().to_vec();
        labels[0] = (labels[0] + 1) % 10;
        assert_ne!(ds.content_hash(), ds.with_labels(labels, false).content_hash());
    }

    #[test]
    fn synthetic_pools_have_requested_sizes() {
        let (train, test) = load_pools(&DataSource::Synthetic {
            train_pool: 40,
            test: 15,
            features: 6,
            spread: 0.3,
        })
        .unwrap();
        assert_eq!((train.len(), test.len()), (40, 15));
        assert_eq!(train.images().cols(), 6);
    }
}
