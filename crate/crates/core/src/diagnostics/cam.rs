//! Class activation matrices: per predicted class, the mean outer product of
//! two consecutive layers' activations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ActivationCapture;
use crate::tensor::{self, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Cam {
    pub class_id: usize,
    /// `(l, l + 1)`.
    pub layer_pair: (usize, usize),
    /// Shape `(width_l, width_{l+1})`.
    pub matrix: Matrix,
    /// Number of samples predicted as `class_id`.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamSet {
    pub layer_pair: (usize, usize),
    /// One CAM per class with non-zero support, ascending class id.
    pub cams: Vec<Cam>,
    /// Classes nobody was predicted as; their CAM is undefined.
    pub empty_classes: Vec<usize>,
}

/// CAMs for the layer pair `(lower, lower + 1)`.
pub fn compute_cams(capture: &ActivationCapture, lower: usize) -> Result<CamSet> {
    let (Some(a), Some(b)) = (capture.layer(lower), capture.layer(lower + 1)) else {
        return Err(Error::InvalidArgument(format!(
            "capture has {} layers, no pair ({lower}, {})",
            capture.layers.len(),
            lower + 1
        )));
    };
    let classes = capture.num_classes();
    let mut members = vec![Vec::new(); classes];
    for (i, &c) in capture.predicted.iter().enumerate() {
        members[c].push(i);
    }
    let mut cams = Vec::new();
    let mut empty_classes = Vec::new();
    for (class_id, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            empty_classes.push(class_id);
            continue;
        }
        let sum = tensor::matmul_tn(&a.select_rows(idx), &b.select_rows(idx))?;
        cams.push(Cam {
            class_id,
            layer_pair: (lower, lower + 1),
            matrix: sum.scale(1.0 / idx.len() as f64)?,
            support: idx.len(),
        });
    }
    Ok(CamSet {
        layer_pair: (lower, lower + 1),
        cams,
        empty_classes,
    })
}

/// Pairwise cosine similarities between CAMs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamSimilarity {
    /// Class id of each row/column of `pairwise`.
    pub classes: Vec<usize>,
    /// Symmetric table; `None` where a CAM is all-zero and the similarity undefined.
    pub pairwise: Vec<Vec<Option<f64>>>,
    /// Mean over distinct pairs with a defined similarity.
    pub mean: f64,
    pub pairs: usize,
    /// Classes whose CAM is identically zero (e.g. all hidden units dead).
    pub zero_classes: Vec<usize>,
}

pub fn cam_similarity_stats(cams: &[Cam]) -> Result<CamSimilarity> {
    if cams.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two CAMs for pairwise similarity, got {}",
            cams.len()
        )));
    }
    let n = cams.len();
    let zero: Vec<bool> = cams.iter().map(|c| c.matrix.is_zero()).collect();
    let mut pairwise = vec![vec![None; n]; n];
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..n {
        if !zero[i] {
            pairwise[i][i] = Some(1.0);
        }
        for j in i + 1..n {
            if zero[i] || zero[j] {
                continue;
            }
            let s = tensor::cosine_similarity(&cams[i].matrix, &cams[j].matrix)?;
            pairwise[i][j] = Some(s);
            pairwise[j][i] = Some(s);
            sum += s;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument(
            "fewer than two non-zero CAMs; similarity undefined".into(),
        ));
    }
    Ok(CamSimilarity {
        classes: cams.iter().map(|c| c.class_id).collect(),
        pairwise,
        mean: sum / pairs as f64,
        pairs,
        zero_classes: cams.iter().zip(&zero).filter(|(_, &z)| z).map(|(c, _)| c.class_id).collect(),
    })
}

impl CamSimilarity {
    /// `num_classes × num_classes` grid indexed by class id holding only the
    /// upper triangle (diagonal included); everything else is `None`.
    pub fn upper_triangle(&self, num_classes: usize) -> Vec<Vec<Option<f64>>> {
        let mut grid = vec![vec![None; num_classes]; num_classes];
        for (a, &ca) in self.classes.iter().enumerate() {
            for (b, &cb) in self.classes.iter().enumerate() {
                if ca <= cb && ca < num_classes && cb < num_classes {
                    grid[ca][cb] = self.pairwise[a][b];
                }
            }
        }
        grid
    }
}
