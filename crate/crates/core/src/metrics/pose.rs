use serde::Serialize;

use super::{MetricsError, Result};
use crate::dataset::{JointMap, Pose2D, NUM_JOINTS};

/// Shoulder-centre to hip-centre distance of a ground-truth pose.
pub fn torso_norm(gt: &Pose2D, map: &JointMap) -> Result<f64> {
    let anchors = [map.left.shoulder, map.right.shoulder, map.left.hip, map.right.hip];
    if anchors.iter().any(|&j| !gt.joints[j].visible) {
        return Err(MetricsError::DegeneratePose("ground-truth torso joints are not all visible".into()));
    }
    let mid = |a: usize, b: usize| ((gt.joints[a].x + gt.joints[b].x) / 2.0, (gt.joints[a].y + gt.joints[b].y) / 2.0);
    let s = mid(map.left.shoulder, map.right.shoulder);
    let h = mid(map.left.hip, map.right.hip);
    let norm = ((s.0 - h.0).powi(2) + (s.1 - h.1).powi(2)).sqrt();
    if !(norm > 1e-9) {
        return Err(MetricsError::DegeneratePose(format!("torso length {norm:e}")));
    }
    Ok(norm)
}

/// Per-joint errors divided by the ground-truth torso length; `None` for invisible GT joints.
pub fn normalized_errors(pred: &Pose2D, gt: &Pose2D, map: &JointMap) -> Result<[Option<f64>; NUM_JOINTS]> {
    let norm = torso_norm(gt, map)?;
    Ok(std::array::from_fn(|j| {
        let (p, g) = (pred.joints[j], gt.joints[j]);
        g.visible.then(|| ((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt() / norm)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdjResult {
    /// `None` where the ground-truth joint is invisible.
    pub detected: [Option<bool>; NUM_JOINTS],
    /// Fraction of visible joints detected.
    pub mean: f64,
}

/// A joint counts as detected when its normalized error is strictly below `threshold`.
pub fn pdj(pred: &Pose2D, gt: &Pose2D, threshold: f64, map: &JointMap) -> Result<PdjResult> {
    let errors = normalized_errors(pred, gt, map)?;
    let detected = errors.map(|e| e.map(|e| e < threshold));
    let visible = detected.iter().flatten().count();
    let hits = detected.iter().flatten().filter(|d| **d).count();
    Ok(PdjResult { detected, mean: if visible == 0 { 0.0 } else { hits as f64 / visible as f64 } })
}

/// Thresholds 0.01, 0.02, ..., 0.50.
pub fn default_thresholds() -> Vec<f64> {
    (1..=50).map(|i| i as f64 * 0.01).collect()
}

/// Errors for every visible joint of every pair, pooled.
fn pooled_errors(pairs: &[(Pose2D, Pose2D)], map: &JointMap, joints: Option<&[usize]>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (pred, gt) in pairs {
        let errs = normalized_errors(pred, gt, map)?;
        for (j, e) in errs.iter().enumerate() {
            if joints.is_none_or(|js| js.contains(&j)) {
                out.extend(e);
            }
        }
    }
    Ok(out)
}

fn fraction_below(errors: &[f64], t: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| **e < t).count() as f64 / errors.len() as f64
}

/// Pooled PDJ at each threshold.
pub fn pdj_curve(pairs: &[(Pose2D, Pose2D)], thresholds: &[f64], map: &JointMap) -> Result<Vec<f64>> {
    let errors = pooled_errors(pairs, map, None)?;
    Ok(thresholds.iter().map(|t| fraction_below(&errors, *t)).collect())
}

/// Trapezoidal area under `values` over `thresholds`, divided by the threshold span.
pub fn trapezoid_auc(thresholds: &[f64], values: &[f64]) -> f64 {
    let span = thresholds.last().copied().unwrap_or(0.0) - thresholds.first().copied().unwrap_or(0.0);
    if thresholds.len() < 2 || span <= 0.0 {
        return values.first().copied().unwrap_or(0.0);
    }
    let area: f64 = thresholds
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    area / span
}

pub fn pdj_auc(pairs: &[(Pose2D, Pose2D)], thresholds: &[f64], map: &JointMap) -> Result<f64> {
    if pairs.is_empty() {
        return Err(MetricsError::Contract("no pose pairs".into()));
    }
    Ok(trapezoid_auc(thresholds, &pdj_curve(pairs, thresholds, map)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScore {
    pub group: String,
    /// `None` when the group has no visible joints (or no joints at all in this map).
    pub pdj: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdjReport {
    pub threshold: f64,
    pub pairs: usize,
    pub overall_pdj: f64,
    pub overall_auc: f64,
    pub groups: Vec<GroupScore>,
    pub curve: Vec<(f64, f64)>,
}

/// PDJ at `threshold` and AUC over the default grid, overall and per body-part group.
pub fn pdj_report(pairs: &[(Pose2D, Pose2D)], threshold: f64, map: &JointMap) -> Result<PdjReport> {
    if pairs.is_empty() {
        return Err(MetricsError::Contract("no pose pairs".into()));
    }
    let grid = default_thresholds();
    let all = pooled_errors(pairs, map, None)?;
    let curve: Vec<f64> = grid.iter().map(|t| fraction_below(&all, *t)).collect();
    let mut groups = Vec::new();
    for (name, joints) in &map.groups {
        let errs = pooled_errors(pairs, map, Some(joints))?;
        let (pdj, auc) = if errs.is_empty() {
            (None, None)
        } else {
            let c: Vec<f64> = grid.iter().map(|t| fraction_below(&errs, *t)).collect();
            (Some(fraction_below(&errs, threshold)), Some(trapezoid_auc(&grid, &c)))
        };
        groups.push(GroupScore { group: name.clone(), pdj, auc });
    }
    Ok(PdjReport {
        threshold,
        pairs: pairs.len(),
        overall_pdj: fraction_below(&all, threshold),
        overall_auc: trapezoid_auc(&grid, &curve),
        groups,
        curve: grid.into_iter().zip(curve).collect(),
    })
}
