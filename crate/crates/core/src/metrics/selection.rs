use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTracklet {
    pub track_id: i64,
    pub score: f64,
    pub is_shooter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionClip {
    pub clip_id: String,
    pub tracklets: Vec<ScoredTracklet>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub acc: f64,
    pub clip_acc: f64,
    pub tracklets: usize,
    pub clips: usize,
    /// `(clip_id, track_id)` picked in each scored clip.
    pub picks: Vec<(String, i64)>,
    pub warnings: Vec<String>,
}

/// Highest score wins; ties go to the lowest `track_id`.
fn argmax(tracklets: &[ScoredTracklet]) -> Option<&ScoredTracklet> {
    tracklets.iter().reduce(|best, t| {
        if t.score > best.score || (t.score == best.score && t.track_id < best.track_id) {
            t
        } else {
            best
        }
    })
}

/// Tracklets scoring at least `threshold` are predicted shooters. Precision, recall and ACC
/// are over all tracklets; CLIP_ACC is the fraction of clips whose top-scored tracklet is the shooter.
pub fn selection_metrics(clips: &[SelectionClip], threshold: f64) -> Result<SelectionResult> {
    let mut warnings = Vec::new();
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut picks = Vec::new();
    let mut correct_clips = 0usize;
    for clip in clips {
        if clip.tracklets.is_empty() {
            let msg = format!("clip {} has no tracklets and is excluded", clip.clip_id);
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        if let Some(t) = clip.tracklets.iter().find(|t| !(0.0..=1.0).contains(&t.score)) {
            return Err(MetricsError::Contract(format!("clip {}: score {} outside [0, 1]", clip.clip_id, t.score)));
        }
        let shooters = clip.tracklets.iter().filter(|t| t.is_shooter).count();
        if shooters != 1 {
            return Err(MetricsError::Contract(format!("clip {} has {shooters} shooters, expected 1", clip.clip_id)));
        }
        for t in &clip.tracklets {
            match (t.score >= threshold, t.is_shooter) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let best = argmax(&clip.tracklets).expect("non-empty clip");
        if best.is_shooter {
            correct_clips += 1;
        }
        picks.push((clip.clip_id.clone(), best.track_id));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    if tp + fp == 0 && !picks.is_empty() {
        warnings.push("no tracklet reached the threshold; precision reported as 0".into());
    }
    Ok(SelectionResult {
        threshold,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        acc: ratio(tp + tn, tp + tn + fp + fn_),
        clip_acc: ratio(correct_clips, picks.len()),
        tracklets: tp + tn + fp + fn_,
        clips: picks.len(),
        picks,
        warnings,
    })
}
