use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{iou, max_weight_assignment, MetricsError, Result};
use crate::dataset::BoundingBox;

const EPS: f64 = 1e-10;

/// Per-frame boxes; `track_id` carries the identity and is unique within a frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackSet {
    pub frames: Vec<Vec<BoundingBox>>,
}

impl TrackSet {
    pub fn new(frames: Vec<Vec<BoundingBox>>) -> Self {
        Self { frames }
    }

    pub fn validate(&self) -> Result<()> {
        for (f, boxes) in self.frames.iter().enumerate() {
            let mut ids: Vec<i64> = boxes.iter().map(|b| b.track_id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(MetricsError::Contract(format!("duplicate identity in frame {f}")));
            }
            if boxes.iter().any(|b| !b.is_valid()) {
                return Err(MetricsError::Contract(format!("invalid box in frame {f}")));
            }
        }
        Ok(())
    }

    pub fn detections(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

/// 0.05, 0.10, ..., 0.95.
pub fn alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotaResult {
    pub alphas: Vec<f64>,
    pub hota_alpha: Vec<f64>,
    pub det_a_alpha: Vec<f64>,
    pub ass_a_alpha: Vec<f64>,
    pub tp: Vec<usize>,
    pub fn_: Vec<usize>,
    pub fp: Vec<usize>,
    /// Means over the alpha grid.
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
}

impl HotaResult {
    fn from_counts(alphas: Vec<f64>, tp: Vec<usize>, fn_: Vec<usize>, fp: Vec<usize>, ass_a_alpha: Vec<f64>) -> Self {
        let det_a_alpha: Vec<f64> =
            (0..alphas.len()).map(|a| tp[a] as f64 / (tp[a] + fn_[a] + fp[a]).max(1) as f64).collect();
        let hota_alpha: Vec<f64> = det_a_alpha.iter().zip(&ass_a_alpha).map(|(d, a)| (d * a).sqrt()).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self {
            hota: mean(&hota_alpha),
            det_a: mean(&det_a_alpha),
            ass_a: mean(&ass_a_alpha),
            alphas,
            hota_alpha,
            det_a_alpha,
            ass_a_alpha,
            tp,
            fn_,
            fp,
        }
    }
}

fn id_index(set: &TrackSet) -> BTreeMap<i64, usize> {
    let mut ids: Vec<i64> = set.frames.iter().flatten().map(|b| b.track_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
}

fn frame_iou(gt: &[BoundingBox], pred: &[BoundingBox]) -> Vec<Vec<f64>> {
    gt.iter().map(|g| pred.iter().map(|p| iou(g, p)).collect()).collect()
}

/// Global alignment score between every GT and predicted identity: the soft count of
/// co-occurrences (IoU normalized against competing overlaps) divided by the
/// identities' total presence minus that count.
pub(crate) fn global_alignment(
    gt: &TrackSet,
    pred: &TrackSet,
    gt_idx: &BTreeMap<i64, usize>,
    pred_idx: &BTreeMap<i64, usize>,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (ng, np) = (gt_idx.len(), pred_idx.len());
    let mut potential = vec![vec![0.0; np]; ng];
    let mut gt_count = vec![0.0; ng];
    let mut pred_count = vec![0.0; np];
    let empty = Vec::new();
    for f in 0..gt.frames.len().max(pred.frames.len()) {
        let g = gt.frames.get(f).unwrap_or(&empty);
        let p = pred.frames.get(f).unwrap_or(&empty);
        let sim = frame_iou(g, p);
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..p.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for (i, gb) in g.iter().enumerate() {
            for (j, pb) in p.iter().enumerate() {
                let denom = row_sum[i] + col_sum[j] - sim[i][j];
                if denom > EPS {
                    potential[gt_idx[&gb.track_id]][pred_idx[&pb.track_id]] += sim[i][j] / denom;
                }
            }
        }
        for b in g {
            gt_count[gt_idx[&b.track_id]] += 1.0;
        }
        for b in p {
            pred_count[pred_idx[&b.track_id]] += 1.0;
        }
    }
    let align = (0..ng)
        .map(|i| (0..np).map(|j| potential[i][j] / (gt_count[i] + pred_count[j] - potential[i][j])).collect())
        .collect();
    (align, gt_count, pred_count)
}

/// HOTA, DetA and AssA over the alpha grid. Each frame is matched once by maximizing
/// `alignment * IoU`; a matched pair counts as a true positive at `alpha` when its IoU is at least `alpha`.
pub fn hota(gt: &TrackSet, pred: &TrackSet) -> Result<HotaResult> {
    gt.validate()?;
    pred.validate()?;
    let alphas = alpha_grid();
    let na = alphas.len();
    let gt_idx = id_index(gt);
    let pred_idx = id_index(pred);
    let (align, gt_count, pred_count) = global_alignment(gt, pred, &gt_idx, &pred_idx);
    let mut tp = vec![0usize; na];
    let mut fn_ = vec![0usize; na];
    let mut fp = vec![0usize; na];
    let mut matches = vec![vec![vec![0.0; pred_idx.len()]; gt_idx.len()]; na];
    let empty = Vec::new();
    for f in 0..gt.frames.len().max(pred.frames.len()) {
        let g = gt.frames.get(f).unwrap_or(&empty);
        let p = pred.frames.get(f).unwrap_or(&empty);
        let sim = frame_iou(g, p);
        let score: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(i, gb)| p.iter().enumerate().map(|(j, pb)| align[gt_idx[&gb.track_id]][pred_idx[&pb.track_id]] * sim[i][j]).collect())
            .collect();
        let assignment = max_weight_assignment(&score);
        for (a, alpha) in alphas.iter().enumerate() {
            let mut hits = 0;
            for (i, j) in assignment.iter().enumerate() {
                if let Some(j) = *j {
                    if sim[i][j] >= alpha - EPS {
                        hits += 1;
                        matches[a][gt_idx[&g[i].track_id]][pred_idx[&p[j].track_id]] += 1.0;
                    }
                }
            }
            tp[a] += hits;
            fn_[a] += g.len() - hits;
            fp[a] += p.len() - hits;
        }
    }
    let ass_a_alpha = (0..na)
        .map(|a| {
            let mut total = 0.0;
            for (i, row) in matches[a].iter().enumerate() {
                for (j, m) in row.iter().enumerate() {
                    if *m > 0.0 {
                        total += m * m / (gt_count[i] + pred_count[j] - m).max(1.0);
                    }
                }
            }
            total / (tp[a].max(1)) as f64
        })
        .collect();
    Ok(HotaResult::from_counts(alphas, tp, fn_, fp, ass_a_alpha))
}

/// Pools several sequences: detection counts are summed and AssA is weighted by true positives.
pub fn combine_hota(results: &[HotaResult]) -> Result<HotaResult> {
    let first = results.first().ok_or_else(|| MetricsError::Contract("no sequences to combine".into()))?;
    let alphas = first.alphas.clone();
    let na = alphas.len();
    if results.iter().any(|r| r.alphas != alphas) {
        return Err(MetricsError::Contract("sequences use different alpha grids".into()));
    }
    let sum = |get: fn(&HotaResult) -> &Vec<usize>, a: usize| results.iter().map(|r| get(r)[a]).sum::<usize>();
    let tp: Vec<usize> = (0..na).map(|a| sum(|r| &r.tp, a)).collect();
    let fn_: Vec<usize> = (0..na).map(|a| sum(|r| &r.fn_, a)).collect();
    let fp: Vec<usize> = (0..na).map(|a| sum(|r| &r.fp, a)).collect();
    let ass_a_alpha = (0..na)
        .map(|a| results.iter().map(|r| r.ass_a_alpha[a] * r.tp[a] as f64).sum::<f64>() / tp[a].max(1) as f64)
        .collect();
    Ok(HotaResult::from_counts(alphas, tp, fn_, fp, ass_a_alpha))
}
