//! Evaluation inputs derived from a synthetic dataset by perturbing its ground truth,
//! so every eval command has something to score without external model outputs.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use shotpose::dataset::{BoundingBox, Pose2D, ShotClip};
use shotpose::metrics::{DetectionFrame, ScoredBox, ScoredTracklet, SelectionClip, TrackSet};

use crate::artifacts::write_json;
use crate::PipelineError;

pub const POSE_PRED: &str = "eval_pose_pred.json";
pub const DETECTIONS: &str = "eval_detections.json";
pub const TRACKS_GT: &str = "eval_tracks_gt.json";
pub const TRACKS_PRED: &str = "eval_tracks_pred.json";
pub const SELECTION: &str = "eval_selection.json";

fn jitter_box<R: Rng + ?Sized>(b: &BoundingBox, scale: f64, rng: &mut R) -> BoundingBox {
    BoundingBox {
        x: b.x + rng.random_range(-scale..scale) * b.w,
        y: b.y + rng.random_range(-scale..scale) * b.h,
        w: b.w * (1.0 + rng.random_range(-scale..scale)),
        h: b.h * (1.0 + rng.random_range(-scale..scale)),
        ..*b
    }
}

fn frames_of(clip: &ShotClip) -> Vec<Vec<BoundingBox>> {
    let mut frames = vec![Vec::new(); clip.frame_count];
    for t in &clip.tracklets {
        for b in &t.boxes {
            if let Some(f) = frames.get_mut(b.frame_index) {
                f.push(BoundingBox { track_id: t.track_id, ..*b });
            }
        }
    }
    frames
}

pub fn pose_predictions<R: Rng + ?Sized>(clips: &[ShotClip], rng: &mut R) -> BTreeMap<String, Vec<Pose2D>> {
    clips
        .iter()
        .filter_map(|c| {
            let poses = c.pose2d.as_ref()?;
            let noisy = poses
                .iter()
                .map(|p| {
                    let mut q = *p;
                    for k in &mut q.joints {
                        k.x += rng.random_range(-6.0..6.0);
                        k.y += rng.random_range(-6.0..6.0);
                    }
                    q
                })
                .collect();
            Some((c.clip_id.clone(), noisy))
        })
        .collect()
}

pub fn detections<R: Rng + ?Sized>(clips: &[ShotClip], rng: &mut R) -> Vec<DetectionFrame> {
    let mut out = Vec::new();
    for clip in clips {
        for gt in frames_of(clip) {
            let mut pred = Vec::new();
            for b in &gt {
                if rng.random_bool(0.9) {
                    pred.push(ScoredBox { bbox: jitter_box(b, 0.08, rng), confidence: rng.random_range(0.5..1.0) });
                }
                if rng.random_bool(0.05) {
                    pred.push(ScoredBox { bbox: jitter_box(b, 0.2, rng), confidence: rng.random_range(0.0..0.6) });
                }
            }
            if rng.random_bool(0.1) {
                let bbox = BoundingBox::new(0, 0, rng.random_range(0.0..1800.0), rng.random_range(0.0..1000.0), 40.0, 90.0);
                pred.push(ScoredBox { bbox, confidence: rng.random_range(0.0..0.7) });
            }
            out.push(DetectionFrame { gt, pred });
        }
    }
    out
}

/// Ground-truth and predicted tracks per clip; predictions occasionally switch to a fresh identity.
pub fn tracks<R: Rng + ?Sized>(
    clips: &[ShotClip],
    rng: &mut R,
) -> (BTreeMap<String, TrackSet>, BTreeMap<String, TrackSet>) {
    let mut gt_all = BTreeMap::new();
    let mut pred_all = BTreeMap::new();
    for clip in clips {
        let gt = frames_of(clip);
        let mut relabel: BTreeMap<i64, i64> = BTreeMap::new();
        let mut next_id = 1000;
        let mut pred = Vec::with_capacity(gt.len());
        for frame in &gt {
            let mut boxes = Vec::new();
            for b in frame {
                if !rng.random_bool(0.95) {
                    continue;
                }
                if rng.random_bool(0.03) {
                    relabel.insert(b.track_id, next_id);
                    next_id += 1;
                }
                let id = *relabel.entry(b.track_id).or_insert(b.track_id + 100);
                boxes.push(BoundingBox { track_id: id, ..jitter_box(b, 0.06, rng) });
            }
            pred.push(boxes);
        }
        gt_all.insert(clip.clip_id.clone(), TrackSet::new(gt));
        pred_all.insert(clip.clip_id.clone(), TrackSet::new(pred));
    }
    (gt_all, pred_all)
}

pub fn selection<R: Rng + ?Sized>(clips: &[ShotClip], rng: &mut R) -> Vec<SelectionClip> {
    clips
        .iter()
        .filter_map(|c| {
            let shooter = c.shooter_track_id?;
            let tracklets = c
                .tracklets
                .iter()
                .map(|t| {
                    let is_shooter = t.track_id == shooter;
                    let score = if is_shooter { rng.random_range(0.4..1.0) } else { rng.random_range(0.0..0.6) };
                    ScoredTracklet { track_id: t.track_id, score, is_shooter }
                })
                .collect();
            Some(SelectionClip { clip_id: c.clip_id.clone(), tracklets })
        })
        .collect()
}

pub fn write_all<R: Rng + ?Sized>(clips: &[ShotClip], dir: &Path, rng: &mut R) -> Result<(), PipelineError> {
    write_json(&dir.join(POSE_PRED), &pose_predictions(clips, rng))?;
    write_json(&dir.join(DETECTIONS), &detections(clips, rng))?;
    let (gt, pred) = tracks(clips, rng);
    write_json(&dir.join(TRACKS_GT), &gt)?;
    write_json(&dir.join(TRACKS_PRED), &pred)?;
    write_json(&dir.join(SELECTION), &selection(clips, rng))
}
