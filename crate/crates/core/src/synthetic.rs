//! Parameterized synthetic shot motions in two styles, for demos and tests.
//!
//! Poses use the h36m17 ordering with y pointing down. The shooting leg swings
//! through the sagittal plane; the `Inside` style keeps a short, open-hipped
//! swing while `Instep` uses a long swing with a deep knee bend.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    BoundingBox, CropFrame, Keypoint2D, MatchInfo, Pose2D, Pose3D, ShotClip, Side, Tracklet, NUM_JOINTS, SEQ_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Inside,
    Instep,
}

impl Style {
    pub fn label(self) -> usize {
        match self {
            Style::Inside => 0,
            Style::Instep => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    swing: f64,
    knee: f64,
    lateral: f64,
    phase: f64,
    lean: f64,
}

impl Motion {
    fn sample<R: Rng + ?Sized>(style: Style, rng: &mut R) -> Self {
        let phase = rng.random_range(-0.15..0.15);
        let mut j = |v: f64| v * rng.random_range(0.9..1.1);
        let base = match style {
            Style::Inside => Motion { swing: 0.55, knee: 0.45, lateral: 0.6, phase: 0.0, lean: 0.05 },
            Style::Instep => Motion { swing: 1.05, knee: 1.3, lateral: 0.05, phase: 0.0, lean: 0.2 },
        };
        Motion {
            swing: j(base.swing),
            knee: j(base.knee),
            lateral: j(base.lateral),
            phase,
            lean: j(base.lean),
        }
    }
}

const THIGH: f64 = 0.45;
const SHANK: f64 = 0.45;
const HIP_HALF_WIDTH: f64 = 0.12;

fn leg(hip: [f64; 3], side_sign: f64, swing: f64, knee_flex: f64, lateral: f64) -> ([f64; 3], [f64; 3]) {
    let knee = [
        hip[0] + side_sign * THIGH * lateral.sin() * 0.5,
        hip[1] + THIGH * swing.cos(),
        hip[2] + THIGH * swing.sin(),
    ];
    let shank = swing - knee_flex;
    let ankle = [
        knee[0] + side_sign * SHANK * lateral.sin(),
        knee[1] + SHANK * shank.cos(),
        knee[2] + SHANK * shank.sin(),
    ];
    (knee, ankle)
}

/// One pose-space sequence in body-centred coordinates (pelvis at the origin).
pub fn shot_sequence<R: Rng + ?Sized>(style: Style, shooting: Side, rng: &mut R) -> Vec<Pose3D> {
    let m = Motion::sample(style, rng);
    let (shoot_sign, plant_sign) = match shooting {
        Side::Right => (1.0, -1.0),
        Side::Left => (-1.0, 1.0),
    };
    (0..SEQ_LEN)
        .map(|t| {
            let p = t as f64 / (SEQ_LEN - 1) as f64;
            let theta = m.swing * (2.0 * std::f64::consts::PI * p - std::f64::consts::FRAC_PI_2 + m.phase).sin();
            let flex = m.knee * (1.0 - (2.0 * std::f64::consts::PI * p + m.phase).cos()) / 2.0;
            let lateral = m.lateral * (std::f64::consts::PI * p).sin();
            let lean = m.lean * (std::f64::consts::PI * p).sin();

            let mut j = [[0.0; 3]; NUM_JOINTS];
            let shoot_hip = [shoot_sign * HIP_HALF_WIDTH, 0.0, 0.0];
            let plant_hip = [plant_sign * HIP_HALF_WIDTH, 0.0, 0.0];
            let (sk, sa) = leg(shoot_hip, shoot_sign, theta, flex, lateral);
            let (pk, pa) = leg(plant_hip, plant_sign, -0.1 * theta, 0.15, 0.0);
            let (r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle) = match shooting {
                Side::Right => (shoot_hip, sk, sa, plant_hip, pk, pa),
                Side::Left => (plant_hip, pk, pa, shoot_hip, sk, sa),
            };
            j[1] = r_hip;
            j[2] = r_knee;
            j[3] = r_ankle;
            j[4] = l_hip;
            j[5] = l_knee;
            j[6] = l_ankle;
            let up = |h: f64| [0.0, -h * lean.cos(), -h * lean.sin()];
            j[7] = up(0.25);
            j[8] = up(0.5);
            j[9] = up(0.6);
            j[10] = up(0.75);
            let arm = 0.4 * (2.0 * std::f64::consts::PI * p).sin();
            for (shoulder, elbow, wrist, sign, swing) in [(11, 12, 13, -1.0, arm), (14, 15, 16, 1.0, -arm)] {
                let s = [sign * 0.2 + j[8][0], j[8][1], j[8][2]];
                j[shoulder] = s;
                j[elbow] = [s[0] + sign * 0.1, s[1] + 0.25 * swing.cos(), s[2] + 0.25 * swing.sin()];
                j[wrist] = [j[elbow][0] + sign * 0.05, j[elbow][1] + 0.25 * swing.cos(), j[elbow][2] + 0.25 * swing.sin()];
            }
            Pose3D { joints: j }
        })
        .collect()
}

/// Places a body-centred sequence in camera space with a random offset, scale and jitter.
pub fn to_camera<R: Rng + ?Sized>(seq: &[Pose3D], rng: &mut R) -> Vec<Pose3D> {
    let offset = [rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(3.0..6.0)];
    let scale = rng.random_range(0.8..1.2);
    let drift = rng.random_range(-0.01..0.01);
    let noise = Normal::new(0.0, 0.002).expect("valid sigma");
    seq.iter()
        .enumerate()
        .map(|(t, p)| Pose3D {
            joints: p.joints.map(|j| {
                [
                    j[0] * scale + offset[0] + drift * t as f64 + noise.sample(rng),
                    j[1] * scale + offset[1] + noise.sample(rng),
                    j[2] * scale + offset[2] + noise.sample(rng),
                ]
            }),
        })
        .collect()
}

/// `n_per_style` sequences of each style in camera space, with labels. All sequences
/// are kicked with the same foot, so style is the only structural difference.
pub fn labelled_sequences<R: Rng + ?Sized>(n_per_style: usize, side: Side, rng: &mut R) -> (Vec<Vec<Pose3D>>, Vec<usize>) {
    let mut seqs = Vec::with_capacity(2 * n_per_style);
    let mut labels = Vec::with_capacity(2 * n_per_style);
    for style in [Style::Inside, Style::Instep] {
        for _ in 0..n_per_style {
            let body = shot_sequence(style, side, rng);
            seqs.push(to_camera(&body, rng));
            labels.push(style.label());
        }
    }
    (seqs, labels)
}

const FOCAL: f64 = 1000.0;
const IMAGE_CENTER: (f64, f64) = (960.0, 540.0);
const CROP_SIZE: f64 = 100.0;

fn project(p: [f64; 3]) -> (f64, f64) {
    (IMAGE_CENTER.0 + FOCAL * p[0] / p[2], IMAGE_CENTER.1 + FOCAL * p[1] / p[2])
}

fn pose_box(pose: &Pose2D, frame: usize, track: i64) -> BoundingBox {
    let xs = pose.joints.iter().map(|k| k.x);
    let ys = pose.joints.iter().map(|k| k.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    BoundingBox::new(frame, track, x0 - 5.0, y0 - 5.0, (x1 - x0) + 10.0, (y1 - y0) + 10.0)
}

/// A complete clip: shooter plus one defender, 2D projections and crops.
pub fn shot_clip<R: Rng + ?Sized>(clip_id: &str, style: Style, rng: &mut R) -> ShotClip {
    let side = if rng.random_bool(0.8) { Side::Right } else { Side::Left };
    let pose3d = to_camera(&shot_sequence(style, side, rng), rng);
    let defender = to_camera(&shot_sequence(Style::Inside, Side::Right, rng), rng);
    let to_2d = |seq: &[Pose3D]| -> Vec<Pose2D> {
        seq.iter()
            .map(|p| Pose2D {
                joints: p.joints.map(|j| {
                    let (x, y) = project(j);
                    Keypoint2D::new(x, y)
                }),
            })
            .collect()
    };
    let shooter_2d = to_2d(&pose3d);
    let defender_2d = to_2d(&defender);
    let shooter_id = rng.random_range(1..50);
    let defender_id = shooter_id + 50;
    let tracklets = vec![
        Tracklet { track_id: shooter_id, boxes: shooter_2d.iter().enumerate().map(|(f, p)| pose_box(p, f, shooter_id)).collect() },
        Tracklet { track_id: defender_id, boxes: defender_2d.iter().enumerate().map(|(f, p)| pose_box(p, f, defender_id)).collect() },
    ];
    let crops = tracklets[0]
        .boxes
        .iter()
        .map(|b| CropFrame { frame_index: b.frame_index, center: b.center(), size: (CROP_SIZE, CROP_SIZE) })
        .collect();
    ShotClip {
        clip_id: clip_id.to_string(),
        match_info: MatchInfo {
            league: "synthetic".into(),
            date: "2024-01-01".into(),
            half: rng.random_range(1..=2u8),
            timestamp: format!("{:02}:{:02}", rng.random_range(0..45u32), rng.random_range(0..60u32)),
        },
        frame_count: SEQ_LEN,
        joint_map_id: crate::dataset::joint_map::H36M_17.into(),
        tracklets,
        shooter_track_id: Some(shooter_id),
        crops,
        pose2d: Some(shooter_2d),
        pose3d: Some(pose3d),
    }
}

/// Clips alternate between the two styles, starting with `Inside`.
pub fn bundled_clips<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<ShotClip> {
    (0..n)
        .map(|i| {
            let style = if i % 2 == 0 { Style::Inside } else { Style::Instep };
            shot_clip(&format!("shot_{i:03}"), style, rng)
        })
        .collect()
}
