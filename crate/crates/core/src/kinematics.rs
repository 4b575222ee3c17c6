//! Pose normalization and per-shot kinematic statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{JointMap, Pose3D, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("degenerate pose: {0}")]
    DegeneratePose(String),
    #[error("empty pose sequence")]
    EmptySequence,
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

/// Frames 10..=15 (1-based) carry the strike; used to decide the kicking side.
pub const SHOT_WINDOW: std::ops::RangeInclusive<usize> = 9..=14;

const MIN_LENGTH: f64 = 1e-9;

/// Which coordinate points "up", and with what sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalAxis {
    pub axis: usize,
    pub up_sign: f64,
}

impl Default for VerticalAxis {
    /// Camera space with y pointing down.
    fn default() -> Self {
        Self { axis: 1, up_sign: -1.0 }
    }
}

impl VerticalAxis {
    pub fn height(&self, p: [f64; 3]) -> f64 {
        self.up_sign * p[self.axis]
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn midpoint(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
}

pub fn pelvis_point(pose: &Pose3D, map: &JointMap) -> [f64; 3] {
    match map.pelvis {
        Some(j) => pose.joints[j],
        None => midpoint(pose.joints[map.left.hip], pose.joints[map.right.hip]),
    }
}

/// Distance from the shoulder centre to the hip centre.
pub fn torso_length(pose: &Pose3D, map: &JointMap) -> f64 {
    let shoulders = midpoint(pose.joints[map.left.shoulder], pose.joints[map.right.shoulder]);
    let hips = midpoint(pose.joints[map.left.hip], pose.joints[map.right.hip]);
    norm(sub(shoulders, hips))
}

/// Pelvis-centred, torso-scaled pose sequence with the transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSequence {
    pub frames: Vec<Pose3D>,
    /// Pelvis position subtracted from each raw frame.
    pub offsets: Vec<[f64; 3]>,
    /// Mean raw torso length the centred coordinates were divided by.
    pub scale: f64,
}

impl NormalizedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Maps the normalized frames back to raw coordinates.
    pub fn denormalize(&self) -> Vec<Pose3D> {
        self.frames
            .iter()
            .zip(&self.offsets)
            .map(|(p, o)| Pose3D {
                joints: p.joints.map(|j| [j[0] * self.scale + o[0], j[1] * self.scale + o[1], j[2] * self.scale + o[2]]),
            })
            .collect()
    }

    /// Wraps frames that are already in normalized coordinates.
    pub fn from_normalized(frames: Vec<Pose3D>) -> Self {
        let offsets = vec![[0.0; 3]; frames.len()];
        Self { frames, offsets, scale: 1.0 }
    }
}

pub fn normalize(seq: &[Pose3D], map: &JointMap) -> Result<NormalizedSequence> {
    if seq.is_empty() {
        return Err(KinematicsError::EmptySequence);
    }
    let scale = seq.iter().map(|p| torso_length(p, map)).sum::<f64>() / seq.len() as f64;
    if !(scale >= MIN_LENGTH) {
        return Err(KinematicsError::DegeneratePose(format!("mean torso length {scale:e}")));
    }
    let offsets: Vec<[f64; 3]> = seq.iter().map(|p| pelvis_point(p, map)).collect();
    let frames = seq
        .iter()
        .zip(&offsets)
        .map(|(p, o)| Pose3D {
            joints: p.joints.map(|j| {
                let c = sub(j, *o);
                [c[0] / scale, c[1] / scale, c[2] / scale]
            }),
        })
        .collect();
    Ok(NormalizedSequence { frames, offsets, scale })
}

/// Interior angle at the knee between the thigh and the shank, in degrees.
pub fn knee_angle(pose: &Pose3D, side: Side, map: &JointMap) -> Result<f64> {
    let l = map.limbs(side);
    let knee = pose.joints[l.knee];
    let thigh = sub(pose.joints[l.hip], knee);
    let shank = sub(pose.joints[l.ankle], knee);
    let (nt, ns) = (norm(thigh), norm(shank));
    if nt < MIN_LENGTH || ns < MIN_LENGTH {
        return Err(KinematicsError::DegeneratePose(format!("zero-length {side} leg segment")));
    }
    let cos = (thigh[0] * shank[0] + thigh[1] * shank[1] + thigh[2] * shank[2]) / (nt * ns);
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Path length of one ankle across all frames.
pub fn ankle_travel(seq: &NormalizedSequence, side: Side, map: &JointMap) -> f64 {
    path_length(&seq.frames, map.limbs(side).ankle)
}

fn path_length(frames: &[Pose3D], joint: usize) -> f64 {
    frames
        .windows(2)
        .map(|w| norm(sub(w[1].joints[joint], w[0].joints[joint])))
        .sum()
}

/// The side whose ankle moves further during the strike window; ties go right.
pub fn shooting_foot(seq: &NormalizedSequence, map: &JointMap) -> Side {
    let last = seq.frames.len().saturating_sub(1);
    let window = &seq.frames[(*SHOT_WINDOW.start()).min(last)..=(*SHOT_WINDOW.end()).min(last)];
    let left = path_length(window, map.left.ankle);
    let right = path_length(window, map.right.ankle);
    if left > right {
        Side::Left
    } else {
        Side::Right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotStats {
    pub clip_id: String,
    pub shooting_side: Side,
    pub ankle_travel: f64,
    /// Highest point reached by the shooting-side ankle.
    pub max_vertical: f64,
    pub min_knee_angle: f64,
}

pub fn shot_stats(clip_id: &str, seq: &NormalizedSequence, map: &JointMap, vertical: VerticalAxis) -> Result<ShotStats> {
    if seq.is_empty() {
        return Err(KinematicsError::EmptySequence);
    }
    let side = shooting_foot(seq, map);
    let ankle = map.limbs(side).ankle;
    let max_vertical = seq
        .frames
        .iter()
        .map(|p| vertical.height(p.joints[ankle]))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut min_knee = f64::INFINITY;
    for p in &seq.frames {
        min_knee = min_knee.min(knee_angle(p, side, map)?);
    }
    Ok(ShotStats {
        clip_id: clip_id.to_string(),
        shooting_side: side,
        ankle_travel: ankle_travel(seq, side, map),
        max_vertical,
        min_knee_angle: min_knee,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub count: usize,
    pub mean_ankle_travel: f64,
    pub mean_max_vertical: f64,
    pub mean_min_knee_angle: f64,
}

/// Percentage differences `(a - b) / b * 100` between two cluster means.
/// `None` where the reference mean is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseDiff {
    pub a: usize,
    pub b: usize,
    pub ankle_travel_pct: Option<f64>,
    pub max_vertical_pct: Option<f64>,
    pub min_knee_angle_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterComparison {
    pub summaries: Vec<ClusterSummary>,
    pub pairs: Vec<PairwiseDiff>,
    pub warnings: Vec<String>,
}

pub fn pct_diff(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| (a - b) / b * 100.0)
}

/// Per-cluster means and every ordered pair of percentage differences.
/// Empty clusters are left out with a warning.
pub fn compare_clusters(groups: &BTreeMap<usize, Vec<ShotStats>>) -> ClusterComparison {
    let mut warnings = Vec::new();
    let mut summaries = Vec::new();
    for (&cluster, stats) in groups {
        if stats.is_empty() {
            warnings.push(format!("cluster {cluster} is empty and was excluded"));
            continue;
        }
        let n = stats.len() as f64;
        summaries.push(ClusterSummary {
            cluster,
            count: stats.len(),
            mean_ankle_travel: stats.iter().map(|s| s.ankle_travel).sum::<f64>() / n,
            mean_max_vertical: stats.iter().map(|s| s.max_vertical).sum::<f64>() / n,
            mean_min_knee_angle: stats.iter().map(|s| s.min_knee_angle).sum::<f64>() / n,
        });
    }
    let mut pairs = Vec::new();
    for a in &summaries {
        for b in &summaries {
            if a.cluster == b.cluster {
                continue;
            }
            pairs.push(PairwiseDiff {
                a: a.cluster,
                b: b.cluster,
                ankle_travel_pct: pct_diff(a.mean_ankle_travel, b.mean_ankle_travel),
                max_vertical_pct: pct_diff(a.mean_max_vertical, b.mean_max_vertical),
                min_knee_angle_pct: pct_diff(a.mean_min_knee_angle, b.mean_min_knee_angle),
            });
        }
    }
    ClusterComparison { summaries, pairs, warnings }
}
