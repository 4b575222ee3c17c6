//! Evaluation metrics: PDJ and its AUC, detection AP, HOTA, tracklet-selection accuracy.

mod detection;
mod hungarian;
mod pose;
mod selection;
mod tracking;


use thiserror::Error;

use crate::dataset::BoundingBox;

pub use detection::{detection_pr_ap, DetectionFrame, DetectionResult, ScoredBox};
pub use hungarian::max_weight_assignment;
pub use pose::{
    default_thresholds, normalized_errors, pdj, pdj_auc, pdj_curve, pdj_report, torso_norm, trapezoid_auc, GroupScore,
    PdjReport, PdjResult,
};
pub use selection::{selection_metrics, ScoredTracklet, SelectionClip, SelectionResult};
pub use tracking::{alpha_grid, combine_hota, hota, HotaResult, TrackSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate pose: {0}")]
    DegeneratePose(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Intersection over union of two boxes; 0 when either has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}
