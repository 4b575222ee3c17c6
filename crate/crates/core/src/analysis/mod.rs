//! Clustering, PCA and t-SNE over latent vectors or flattened pose sequences.

mod kmeans;
mod pca;
mod tsne;

use thiserror::Error;

use crate::dataset::{Pose3D, NUM_JOINTS, SEQ_LEN};

pub use kmeans::{inertia, inertia_sweep, kmeans_fit, label_agreement, KMeansModel};
pub use pca::{pca_fit, PcaModel};
pub use tsne::{tsne_embed, TsneConfig, TsneEmbedding, KL_EVERY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Checks for a non-empty, rectangular, finite matrix and returns its width.
fn check_rows(data: &[Vec<f64>]) -> Result<usize> {
    let first = data.first().ok_or_else(|| AnalysisError::Contract("no input vectors".into()))?;
    let dim = first.len();
    if dim == 0 {
        return Err(AnalysisError::Contract("input vectors are empty".into()));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != dim {
            return Err(AnalysisError::Contract(format!("row {i} has length {}, expected {dim}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite(format!("row {i} contains a non-finite value")));
        }
    }
    Ok(dim)
}

pub const FLAT_LEN: usize = SEQ_LEN * NUM_JOINTS * 3;

/// Row-major frame, joint, coordinate: element `(f, j, c)` lands at `f * 51 + j * 3 + c`.
pub fn flatten_sequence(seq: &[Pose3D]) -> Vec<f64> {
    seq.iter().flat_map(|p| p.joints.iter().flatten().copied()).collect()
}

pub fn unflatten_sequence(flat: &[f64]) -> Result<Vec<Pose3D>> {
    let per_frame = NUM_JOINTS * 3;
    if flat.is_empty() || flat.len() % per_frame != 0 {
        return Err(AnalysisError::Contract(format!("length {} is not a whole number of frames", flat.len())));
    }
    Ok(flat
        .chunks(per_frame)
        .map(|f| Pose3D { joints: std::array::from_fn(|j| [f[j * 3], f[j * 3 + 1], f[j * 3 + 2]]) })
        .collect())
}
