//! Sub-sampled Rademacher richness of class-wise hidden activations.
//!
//! Samples predicted as class `j` are split, in index order, into disjoint
//! groups of `group_size` (the remainder is dropped). For every group and
//! every sign vector `σ` drawn, the signed group average
//! `v = (1/g) Σ_i σ_i f(x_i)` is reduced to a scalar, the maximum over draws
//! is the group's richness, and the class richness is the mean over groups.
//! The reported value is the mean over classes with at least one full group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ActivationCapture;
use crate::tensor::{derive_seed, sample_rademacher, Matrix, Rng};

/// How the signed group-average vector is reduced to a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RichnessMode {
    /// Mean over hidden units.
    #[default]
    Mean,
    /// Euclidean norm.
    Norm,
}

/// Exhaustive enumeration is refused above this group size.
pub const MAX_EXHAUSTIVE_GROUP: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RichnessConfig {
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub mode: RichnessMode,
    /// Replace the random draws with all `2^group_size` sign patterns.
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_group_size() -> usize {
    20
}

fn default_draws() -> usize {
    50
}

impl Default for RichnessConfig {
    fn default() -> Self {
        Self {
            group_size: default_group_size(),
            draws: default_draws(),
            mode: RichnessMode::default(),
            exhaustive: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessReport {
    /// `None` for classes without a full group.
    pub per_class: Vec<Option<f64>>,
    pub groups_per_class: Vec<usize>,
    pub overall: f64,
    pub group_size: usize,
    pub draws: usize,
    pub exhaustive: bool,
    pub mode: RichnessMode,
    pub seed: u64,
}

fn score(acts: &Matrix, group: &[usize], signs: &[f64], mode: RichnessMode, buf: &mut [f64]) -> f64 {
    buf.iter_mut().for_each(|v| *v = 0.0);
    for (&i, &s) in group.iter().zip(signs) {
        for (b, &a) in buf.iter_mut().zip(acts.row(i)) {
            *b += s * a;
        }
    }
    let g = group.len() as f64;
    match mode {
        RichnessMode::Mean => buf.iter().map(|v| v / g).sum::<f64>() / buf.len() as f64,
        RichnessMode::Norm => buf.iter().map(|v| (v / g) * (v / g)).sum::<f64>().sqrt(),
    }
}

/// Richness of one group: the best score over the configured sign vectors.
///
/// Random draws come from a stream seeded by `group_seed` alone, so asking for
/// more draws only extends the sequence.
pub fn group_richness(acts: &Matrix, group: &[usize], config: &RichnessConfig, group_seed: u64) -> Result<f64> {
    let mut buf = vec![0.0; acts.cols()];
    let g = group.len();
    let mut best = f64::NEG_INFINITY;
    if config.exhaustive {
        if g > MAX_EXHAUSTIVE_GROUP {
            return Err(Error::InvalidArgument(format!(
                "exhaustive enumeration limited to groups of {MAX_EXHAUSTIVE_GROUP}, got {g}"
            )));
        }
        let mut signs = vec![0.0; g];
        for pattern in 0u64..(1 << g) {
            for (i, s) in signs.iter_mut().enumerate() {
                *s = if pattern >> i & 1 == 1 { 1.0 } else { -1.0 };
            }
            best = best.max(score(acts, group, &signs, config.mode, &mut buf));
        }
    } else {
        let mut rng = Rng::new(group_seed);
        for _ in 0..config.draws {
            let signs = sample_rademacher(&mut rng, g)?;
            best = best.max(score(acts, group, &signs, config.mode, &mut buf));
        }
    }
    Ok(best)
}

/// Richness of `activations` (rows = samples) bucketed by `predicted` class.
pub fn estimate_richness(
    activations: &Matrix,
    predicted: &[usize],
    num_classes: usize,
    config: &RichnessConfig,
) -> Result<RichnessReport> {
    if config.group_size == 0 {
        return Err(Error::InvalidArgument("group_size must be positive".into()));
    }
    if config.draws == 0 && !config.exhaustive {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    if predicted.len() != activations.rows() {
        return Err(Error::CountMismatch {
            images: activations.rows(),
            labels: predicted.len(),
        });
    }
    let mut members = vec![Vec::new(); num_classes];
    for (i, &c) in predicted.iter().enumerate() {
        if c >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: c,
                classes: num_classes,
            });
        }
        members[c].push(i);
    }
    let mut per_class = Vec::with_capacity(num_classes);
    let mut groups_per_class = Vec::with_capacity(num_classes);
    for (class, idx) in members.iter().enumerate() {
        let groups: Vec<&[usize]> = idx.chunks_exact(config.group_size).collect();
        groups_per_class.push(groups.len());
        if groups.is_empty() {
            per_class.push(None);
            continue;
        }
        let mut total = 0.0;
        for (gi, group) in groups.iter().enumerate() {
            let seed = derive_seed(config.seed, &[class as u64, gi as u64]);
            total += group_richness(activations, group, config, seed)?;
        }
        per_class.push(Some(total / groups.len() as f64));
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no class has {} predicted samples",
            config.group_size
        )));
    }
    Ok(RichnessReport {
        overall: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
        groups_per_class,
        group_size: config.group_size,
        draws: if config.exhaustive { 1 << config.group_size.min(63) } else { config.draws },
        exhaustive: config.exhaustive,
        mode: config.mode,
        seed: config.seed,
    })
}

/// Richness of the penultimate layer of a capture.
pub fn estimate_richness_capture(capture: &ActivationCapture, config: &RichnessConfig) -> Result<RichnessReport> {
    let acts = capture
        .penultimate()
        .ok_or_else(|| Error::InvalidArgument("capture has no hidden layer".into()))?;
    estimate_richness(acts, &capture.predicted, capture.num_classes(), config)
}
