use serde::{Deserialize, Serialize};

use super::{iou, MetricsError, Result};
use crate::dataset::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionFrame {
    #[serde(default)]
    pub gt: Vec<BoundingBox>,
    #[serde(default)]
    pub pred: Vec<ScoredBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ground_truth: usize,
    /// False when there were no predictions; precision is then reported as 0.
    pub precision_defined: bool,
    /// `(recall, precision)` after each prediction in confidence order.
    pub curve: Vec<(f64, f64)>,
}

/// Greedy matching in descending confidence; each prediction takes the unmatched GT box
/// of highest IoU in its frame and is a true positive if that IoU is at least `iou_threshold`.
/// AP is the area under the monotone precision envelope (all-point interpolation).
pub fn detection_pr_ap(frames: &[DetectionFrame], iou_threshold: f64) -> Result<DetectionResult> {
    let mut preds: Vec<(usize, usize)> = Vec::new();
    for (f, frame) in frames.iter().enumerate() {
        for b in frame.gt.iter().chain(frame.pred.iter().map(|p| &p.bbox)) {
            if !b.is_valid() {
                return Err(MetricsError::Contract(format!("invalid box in frame {f}")));
            }
        }
        for (i, p) in frame.pred.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(MetricsError::Contract(format!("confidence {} outside [0, 1]", p.confidence)));
            }
            preds.push((f, i));
        }
    }
    // stable: equal confidences keep frame order, then listing order
    preds.sort_by(|a, b| frames[b.0].pred[b.1].confidence.total_cmp(&frames[a.0].pred[a.1].confidence));
    let n_gt: usize = frames.iter().map(|f| f.gt.len()).sum();
    let mut matched: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.gt.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::with_capacity(preds.len());
    for (f, i) in preds {
        let p = &frames[f].pred[i].bbox;
        let best = frames[f]
            .gt
            .iter()
            .enumerate()
            .filter(|(g, _)| !matched[f][*g])
            .map(|(g, b)| (g, iou(p, b)))
            .fold(None, |best: Option<(usize, f64)>, cur| if best.is_none_or(|b| cur.1 > b.1) { Some(cur) } else { best });
        match best {
            Some((g, v)) if v >= iou_threshold => {
                matched[f][g] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        curve.push((recall, tp as f64 / (tp + fp) as f64));
    }
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    for k in (0..curve.len()).rev() {
        envelope = envelope.max(curve[k].1);
        let prev_recall = if k == 0 { 0.0 } else { curve[k - 1].0 };
        if curve[k].0 > prev_recall {
            ap += (curve[k].0 - prev_recall) * envelope;
        }
    }
    let predictions = tp + fp;
    Ok(DetectionResult {
        precision: if predictions == 0 { 0.0 } else { tp as f64 / predictions as f64 },
        recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
        ap,
        true_positives: tp,
        false_positives: fp,
        ground_truth: n_gt,
        precision_defined: predictions > 0,
        curve,
    })
}
