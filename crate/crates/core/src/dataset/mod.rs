//! Shot-clip dataset schema.
//!
//! One directory per clip:
//!
//! * `clip.json` holds metadata, tracklets, crop geometry and the optional
//!   2D pose sequence (with per-joint visibility).
//! * `pose3d.json` (optional) is a bare `20 x 17 x 3` array of lifted 3D joints.
//!
//! A dataset root may also carry `dataset.json` (`schema_version`, `split`)
//! and `joint_map.json` describing a custom skeleton convention.

pub mod joint_map;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use joint_map::{JointMap, Limbs, Side, NUM_JOINTS};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEQ_LEN: usize = 20;
pub const CLIP_FILE: &str = "clip.json";
pub const POSE3D_FILE: &str = "pose3d.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const JOINT_MAP_FILE: &str = "joint_map.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: not found", .0.display())]
    NotFound(PathBuf),
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {message}")]
    Parse { path: String, message: String },
    #[error("clip {clip_id}: invalid {field}: {message}")]
    Validation {
        clip_id: String,
        field: String,
        message: String,
    },
    #[error("duplicate clip_id {0}")]
    DuplicateClip(String),
    #[error("unknown joint map {0}")]
    UnknownJointMap(String),
    #[error("invalid joint map {0}")]
    JointMap(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no candidate pose has a visible torso")]
    NoSelection,
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            DatasetError::NotFound(path.to_path_buf())
        } else {
            DatasetError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

/// Axis-aligned player box in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default)]
    pub track_id: i64,
}

impl BoundingBox {
    pub fn new(frame_index: usize, track_id: i64, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { frame_index, x, y, w, h, track_id }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }
}

/// 2D keypoint in pixels. Serialized as `[x, y, visible]`; `visible` may be
/// omitted on input and defaults to `true`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint2D {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, visible: true }
    }
}

impl Serialize for Keypoint2D {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.x, self.y, self.visible).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Keypoint2D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Full(f64, f64, bool),
            Bare(f64, f64),
        }
        match Raw::deserialize(d).map_err(|_| D::Error::custom("keypoint must be [x, y] or [x, y, visible]"))? {
            Raw::Full(x, y, visible) => Ok(Self { x, y, visible }),
            Raw::Bare(x, y) => Ok(Self::new(x, y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose2D {
    pub joints: [Keypoint2D; NUM_JOINTS],
}

impl Pose2D {
    /// Reorders joints with `perm` from [`JointMap::permutation_to`].
    pub fn remap(&self, perm: &[usize]) -> Self {
        Self {
            joints: std::array::from_fn(|i| self.joints[perm[i]]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose3D {
    pub joints: [[f64; 3]; NUM_JOINTS],
}

impl Pose3D {
    pub fn zeros() -> Self {
        Self {
            joints: [[0.0; 3]; NUM_JOINTS],
        }
    }

    pub fn remap(&self, perm: &[usize]) -> Self {
        Self {
            joints: std::array::from_fn(|i| self.joints[perm[i]]),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchInfo {
    #[serde(default)]
    pub league: String,
    #[serde(default)]
    pub date: String,
    #[serde(default)]
    pub half: u8,
    #[serde(default)]
    pub timestamp: String,
}

/// Crop window used to cut the shooter-centred image for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropFrame {
    pub frame_index: usize,
    pub center: (f64, f64),
    pub size: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub track_id: i64,
    pub boxes: Vec<BoundingBox>,
}

/// One validated shot instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotClip {
    pub clip_id: String,
    pub match_info: MatchInfo,
    pub frame_count: usize,
    pub joint_map_id: String,
    pub tracklets: Vec<Tracklet>,
    pub shooter_track_id: Option<i64>,
    pub crops: Vec<CropFrame>,
    pub pose2d: Option<Vec<Pose2D>>,
    pub pose3d: Option<Vec<Pose3D>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawBox {
    frame_index: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTracklet {
    track_id: i64,
    boxes: Vec<RawBox>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawClip {
    schema_version: u32,
    clip_id: String,
    #[serde(rename = "match", default)]
    match_info: MatchInfo,
    frame_count: usize,
    #[serde(default = "default_joint_map")]
    joint_map_id: String,
    #[serde(default)]
    shooter_track_id: Option<i64>,
    tracklets: Vec<RawTracklet>,
    #[serde(default)]
    crops: Vec<CropFrame>,
    #[serde(default)]
    pose2d: Option<Vec<Vec<Keypoint2D>>>,
}

fn default_joint_map() -> String {
    joint_map::H36M_17.to_string()
}

/// A single schema problem found in a clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ShotClip {
    /// A clip with the given id and tracklets and nothing else.
    pub fn minimal(clip_id: &str, tracklets: Vec<Tracklet>) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            match_info: MatchInfo::default(),
            frame_count: SEQ_LEN,
            joint_map_id: default_joint_map(),
            tracklets,
            shooter_track_id: None,
            crops: Vec::new(),
            pose2d: None,
            pose3d: None,
        }
    }

    pub fn tracklet(&self, track_id: i64) -> Option<&Tracklet> {
        self.tracklets.iter().find(|t| t.track_id == track_id)
    }

    /// Every invariant violation, in a stable order.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        if self.clip_id.trim().is_empty() {
            out.push(Issue::new("clip_id", "must be non-empty"));
        }
        if self.joint_map_id.trim().is_empty() {
            out.push(Issue::new("joint_map_id", "must be non-empty"));
        }
        if self.frame_count != SEQ_LEN {
            out.push(Issue::new(
                "frame_count",
                format!("expected {SEQ_LEN} frames, got {}", self.frame_count),
            ));
        }
        let mut ids = HashSet::new();
        for t in &self.tracklets {
            if !ids.insert(t.track_id) {
                out.push(Issue::new("tracklets", format!("track_id {} appears twice", t.track_id)));
            }
            let mut frames = HashSet::new();
            for b in &t.boxes {
                if !b.is_valid() {
                    out.push(Issue::new(
                        "tracklets.boxes",
                        format!("track {} frame {}: box needs finite coordinates and w, h > 0", t.track_id, b.frame_index),
                    ));
                }
                if b.frame_index >= self.frame_count {
                    out.push(Issue::new(
                        "tracklets.boxes",
                        format!("track {} frame {} outside clip", t.track_id, b.frame_index),
                    ));
                }
                if b.track_id != t.track_id {
                    out.push(Issue::new("tracklets.boxes", format!("box track_id {} inside tracklet {}", b.track_id, t.track_id)));
                }
                if !frames.insert(b.frame_index) {
                    out.push(Issue::new(
                        "tracklets",
                        format!("track {} has duplicated frame {}", t.track_id, b.frame_index),
                    ));
                }
            }
        }
        if let Some(id) = self.shooter_track_id {
            if !ids.contains(&id) {
                out.push(Issue::new("shooter_track_id", format!("no tracklet with id {id}")));
            }
        }
        if !self.crops.is_empty() {
            if self.crops.len() != self.frame_count {
                out.push(Issue::new(
                    "crops",
                    format!("expected {} crop frames, got {}", self.frame_count, self.crops.len()),
                ));
            }
            let mut frames = HashSet::new();
            for c in &self.crops {
                let ok = all_finite(&[c.center.0, c.center.1, c.size.0, c.size.1]) && c.size.0 > 0.0 && c.size.1 > 0.0;
                if !ok || c.frame_index >= self.frame_count || !frames.insert(c.frame_index) {
                    out.push(Issue::new("crops", format!("bad crop entry for frame {}", c.frame_index)));
                }
            }
        }
        if let Some(seq) = &self.pose2d {
            if seq.len() != SEQ_LEN {
                out.push(Issue::new("frame_count", format!("pose2d has {} frames, expected {SEQ_LEN}", seq.len())));
            }
            if seq.iter().flat_map(|p| &p.joints).any(|k| !k.x.is_finite() || !k.y.is_finite()) {
                out.push(Issue::new("pose2d", "non-finite keypoint"));
            }
        }
        if let Some(seq) = &self.pose3d {
            if seq.len() != SEQ_LEN {
                out.push(Issue::new("frame_count", format!("pose3d has {} frames, expected {SEQ_LEN}", seq.len())));
            }
            if seq.iter().flat_map(|p| &p.joints).any(|j| !all_finite(j)) {
                out.push(Issue::new("pose3d", "non-finite joint"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        match self.issues().into_iter().next() {
            None => Ok(()),
            Some(issue) => Err(DatasetError::Validation {
                clip_id: self.clip_id.clone(),
                field: issue.field,
                message: issue.message,
            }),
        }
    }
}

fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "schema".to_string())
}

fn schema_error(clip_id: &str, e: serde_json::Error) -> DatasetError {
    let message = e.to_string();
    DatasetError::Validation {
        clip_id: clip_id.to_string(),
        field: field_of(&message),
        message,
    }
}

/// Parses `clip.json` text and, optionally, `pose3d.json` text into a
/// validated clip. Never panics on malformed input.
pub fn parse_clip(clip_json: &str, pose3d_json: Option<&str>) -> Result<ShotClip, DatasetError> {
    let clip = decode_clip(clip_json, pose3d_json)?;
    clip.validate()?;
    Ok(clip)
}

/// Structural decoding only: JSON syntax, field types and per-frame joint
/// counts. Invariants are left to [`ShotClip::issues`].
fn decode_clip(clip_json: &str, pose3d_json: Option<&str>) -> Result<ShotClip, DatasetError> {
    let value: serde_json::Value = serde_json::from_str(clip_json).map_err(|e| DatasetError::Parse {
        path: CLIP_FILE.into(),
        message: e.to_string(),
    })?;
    let clip_id = value
        .get("clip_id")
        .and_then(|v| v.as_str())
        .unwrap_or("<unknown>")
        .to_string();
    let raw: RawClip = serde_json::from_value(value).map_err(|e| schema_error(&clip_id, e))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::Validation {
            clip_id,
            field: "schema_version".into(),
            message: format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.schema_version),
        });
    }

    let pose2d = match raw.pose2d {
        None => None,
        Some(frames) => Some(
            frames
                .into_iter()
                .enumerate()
                .map(|(f, joints)| {
                    let n = joints.len();
                    let joints: [Keypoint2D; NUM_JOINTS] = joints.try_into().map_err(|_| DatasetError::Validation {
                        clip_id: clip_id.clone(),
                        field: "pose2d".into(),
                        message: format!("frame {f} has {n} joints, expected {NUM_JOINTS}"),
                    })?;
                    Ok(Pose2D { joints })
                })
                .collect::<Result<Vec<_>, DatasetError>>()?,
        ),
    };
    let pose3d = match pose3d_json {
        None => None,
        Some(text) => {
            let frames: Vec<Vec<Vec<f64>>> = serde_json::from_str(text).map_err(|e| DatasetError::Validation {
                clip_id: clip_id.clone(),
                field: "pose3d".into(),
                message: e.to_string(),
            })?;
            Some(parse_pose3d(&clip_id, frames)?)
        }
    };

    let tracklets = raw
        .tracklets
        .into_iter()
        .map(|t| Tracklet {
            track_id: t.track_id,
            boxes: t
                .boxes
                .into_iter()
                .map(|b| BoundingBox::new(b.frame_index, t.track_id, b.x, b.y, b.w, b.h))
                .collect(),
        })
        .collect();
    let clip = ShotClip {
        clip_id,
        match_info: raw.match_info,
        frame_count: raw.frame_count,
        joint_map_id: raw.joint_map_id,
        tracklets,
        shooter_track_id: raw.shooter_track_id,
        crops: raw.crops,
        pose2d,
        pose3d,
    };
    Ok(clip)
}

fn parse_pose3d(clip_id: &str, frames: Vec<Vec<Vec<f64>>>) -> Result<Vec<Pose3D>, DatasetError> {
    let bad = |message: String| DatasetError::Validation {
        clip_id: clip_id.to_string(),
        field: "pose3d".into(),
        message,
    };
    frames
        .into_iter()
        .enumerate()
        .map(|(f, joints)| {
            if joints.len() != NUM_JOINTS {
                return Err(bad(format!("frame {f} has {} joints, expected {NUM_JOINTS}", joints.len())));
            }
            let mut pose = Pose3D::zeros();
            for (j, xyz) in joints.into_iter().enumerate() {
                pose.joints[j] = xyz
                    .try_into()
                    .map_err(|v: Vec<f64>| bad(format!("frame {f} joint {j} has {} coordinates", v.len())))?;
            }
            Ok(pose)
        })
        .collect()
}

/// Serializes a clip to `(clip.json, Option<pose3d.json>)` text.
pub fn clip_to_json(clip: &ShotClip) -> (String, Option<String>) {
    let raw = RawClip {
        schema_version: SCHEMA_VERSION,
        clip_id: clip.clip_id.clone(),
        match_info: clip.match_info.clone(),
        frame_count: clip.frame_count,
        joint_map_id: clip.joint_map_id.clone(),
        shooter_track_id: clip.shooter_track_id,
        tracklets: clip
            .tracklets
            .iter()
            .map(|t| RawTracklet {
                track_id: t.track_id,
                boxes: t
                    .boxes
                    .iter()
                    .map(|b| RawBox { frame_index: b.frame_index, x: b.x, y: b.y, w: b.w, h: b.h })
                    .collect(),
            })
            .collect(),
        crops: clip.crops.clone(),
        pose2d: clip
            .pose2d
            .as_ref()
            .map(|seq| seq.iter().map(|p| p.joints.to_vec()).collect()),
    };
    let clip_json = serde_json::to_string_pretty(&raw).expect("clip serializes");
    let pose3d_json = clip
        .pose3d
        .as_ref()
        .map(|seq| serde_json::to_string(seq).expect("poses serialize"));
    (clip_json, pose3d_json)
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))
}

/// Loads and validates the clip stored in directory `dir`.
pub fn load_shot_clip(dir: &Path) -> Result<ShotClip, DatasetError> {
    let clip_text = read(&dir.join(CLIP_FILE))?;
    let pose_path = dir.join(POSE3D_FILE);
    let pose_text = if pose_path.exists() { Some(read(&pose_path)?) } else { None };
    parse_clip(&clip_text, pose_text.as_deref())
}

/// Writes `clip` into `dir`, creating it if needed. A stale `pose3d.json`
/// is removed when the clip carries no 3D poses.
pub fn save_shot_clip(clip: &ShotClip, dir: &Path) -> Result<(), DatasetError> {
    clip.validate()?;
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    let (clip_json, pose_json) = clip_to_json(clip);
    let clip_path = dir.join(CLIP_FILE);
    fs::write(&clip_path, clip_json).map_err(|e| DatasetError::io(&clip_path, e))?;
    let pose_path = dir.join(POSE3D_FILE);
    match pose_json {
        Some(text) => fs::write(&pose_path, text).map_err(|e| DatasetError::io(&pose_path, e))?,
        None if pose_path.exists() => fs::remove_file(&pose_path).map_err(|e| DatasetError::io(&pose_path, e))?,
        None => {}
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    #[serde(default)]
    pub split: Split,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            split: Split::Train,
        }
    }
}

/// Immutable collection of clips, ordered by directory name.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub clips: Vec<ShotClip>,
}

impl Dataset {
    pub fn clip(&self, clip_id: &str) -> Option<&ShotClip> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }
}

fn clip_dirs(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let entries = fs::read_dir(root).map_err(|e| DatasetError::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DatasetError::io(root, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn load_meta(root: &Path) -> Result<DatasetMeta, DatasetError> {
    let path = root.join(DATASET_FILE);
    if !path.exists() {
        return Ok(DatasetMeta::default());
    }
    let meta: DatasetMeta = serde_json::from_str(&read(&path)?).map_err(|e| DatasetError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::Parse {
            path: path.display().to_string(),
            message: format!("unsupported schema_version {}", meta.schema_version),
        });
    }
    Ok(meta)
}

/// Loads every clip directory under `root`; fails on the first invalid clip.
pub fn load_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let meta = load_meta(root)?;
    let mut seen = HashSet::new();
    let mut clips = Vec::new();
    for dir in clip_dirs(root)? {
        let clip = load_shot_clip(&dir)?;
        if !seen.insert(clip.clip_id.clone()) {
            return Err(DatasetError::DuplicateClip(clip.clip_id));
        }
        clips.push(clip);
    }
    Ok(Dataset { meta, clips })
}

/// Writes a dataset: `dataset.json` plus one directory per clip named by clip id.
pub fn save_dataset(dataset: &Dataset, root: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(root).map_err(|e| DatasetError::io(root, e))?;
    let path = root.join(DATASET_FILE);
    let text = serde_json::to_string_pretty(&dataset.meta).expect("meta serializes");
    fs::write(&path, text).map_err(|e| DatasetError::io(&path, e))?;
    for clip in &dataset.clips {
        save_shot_clip(clip, &root.join(&clip.clip_id))?;
    }
    Ok(())
}

/// Resolves a joint map id: built-ins first, then `root/joint_map.json`.
pub fn resolve_joint_map(id: &str, root: Option<&Path>) -> Result<JointMap, DatasetError> {
    if let Ok(map) = JointMap::builtin(id) {
        return Ok(map);
    }
    if let Some(root) = root {
        let path = root.join(JOINT_MAP_FILE);
        if path.exists() {
            let map = JointMap::from_json(&read(&path)?)?;
            if map.id == id {
                return Ok(map);
            }
        }
    }
    Err(DatasetError::UnknownJointMap(id.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipReport {
    pub dir: String,
    pub clip_id: Option<String>,
    pub passed: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub root: String,
    pub clips: Vec<ClipReport>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.clips.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClipReport> {
        self.clips.iter().filter(|c| !c.passed)
    }
}

/// Validates one clip directory in isolation, collecting every problem found.
pub fn validate_clip_dir(dir: &Path) -> ClipReport {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let loaded = read(&dir.join(CLIP_FILE)).and_then(|clip_text| {
        let pose_path = dir.join(POSE3D_FILE);
        let pose_text = if pose_path.exists() { Some(read(&pose_path)?) } else { None };
        Ok((clip_text, pose_text))
    });
    let (clip_text, pose_text) = match loaded {
        Ok(t) => t,
        Err(e) => {
            return ClipReport { dir: name, clip_id: None, passed: false, reasons: vec![e.to_string()] };
        }
    };
    match decode_clip(&clip_text, pose_text.as_deref()) {
        Ok(clip) => {
            let reasons: Vec<String> = clip.issues().into_iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
            ClipReport { dir: name, clip_id: Some(clip.clip_id), passed: reasons.is_empty(), reasons }
        }
        Err(e) => {
            let clip_id = match &e {
                DatasetError::Validation { clip_id, .. } => Some(clip_id.clone()),
                _ => None,
            };
            ClipReport { dir: name, clip_id, passed: false, reasons: vec![e.to_string()] }
        }
    }
}

/// Validates every clip directory under `root` and flags duplicate clip ids.
pub fn validate_dataset(root: &Path) -> Result<ValidationReport, DatasetError> {
    let dirs = clip_dirs(root)?;
    let mut clips: Vec<ClipReport> = dirs.iter().map(|d| validate_clip_dir(d)).collect();
    let mut owners: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in clips.iter().enumerate() {
        if let (true, Some(id)) = (c.passed, &c.clip_id) {
            owners.entry(id.clone()).or_default().push(i);
        }
    }
    for (id, idx) in owners.into_iter().filter(|(_, v)| v.len() > 1) {
        for i in idx {
            clips[i].passed = false;
            clips[i].reasons.push(format!("duplicate clip_id {id}"));
        }
    }
    Ok(ValidationReport {
        root: root.display().to_string(),
        clips,
    })
}

/// Picks the candidate whose torso centre lies closest to the crop centre.
/// Candidates with any invisible torso joint are ineligible; ties go to the
/// lowest index.
pub fn select_shooter_pose(
    candidates: &[Pose2D],
    crop_center: (f64, f64),
    joint_map: &JointMap,
) -> Result<usize, DatasetError> {
    if candidates.is_empty() {
        return Err(DatasetError::Contract("candidate pose list is empty".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, pose) in candidates.iter().enumerate() {
        let Some((x, y)) = torso_point(pose, joint_map) else {
            continue;
        };
        let d = ((x - crop_center.0).powi(2) + (y - crop_center.1).powi(2)).sqrt();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(DatasetError::NoSelection)
}

/// Mean of the map's torso-centre joints, if all are visible.
pub fn torso_point(pose: &Pose2D, joint_map: &JointMap) -> Option<(f64, f64)> {
    let joints = &joint_map.torso_center;
    if joints.iter().any(|&j| !pose.joints[j].visible) {
        return None;
    }
    let n = joints.len() as f64;
    let x = joints.iter().map(|&j| pose.joints[j].x).sum::<f64>() / n;
    let y = joints.iter().map(|&j| pose.joints[j].y).sum::<f64>() / n;
    Some((x, y))
}
