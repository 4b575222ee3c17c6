//! Skeleton conventions: joint names, bone edges, anatomical anchors and the
//! body-part grouping used in per-part PDJ reports.

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const NUM_JOINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Joint indices for one body side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limbs {
    pub shoulder: usize,
    pub hip: usize,
    pub knee: usize,
    pub ankle: usize,
}

/// A 17-joint skeleton convention.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMap {
    pub id: String,
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    /// Body-part columns for PDJ reporting, in display order.
    pub groups: Vec<(String, Vec<usize>)>,
    /// Root joint; `None` means the midpoint of the two hips.
    pub pelvis: Option<usize>,
    /// Joints whose mean is the "center of body" point used for shooter selection.
    pub torso_center: Vec<usize>,
    pub left: Limbs,
    pub right: Limbs,
}

/// On-disk form of a [`JointMap`]; every joint is referenced by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointMapFile {
    pub id: String,
    pub joints: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub groups: Vec<JointGroupFile>,
    #[serde(default)]
    pub pelvis: Option<String>,
    pub torso_center: Vec<String>,
    pub left: LimbsFile,
    pub right: LimbsFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointGroupFile {
    pub name: String,
    pub joints: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimbsFile {
    pub shoulder: String,
    pub hip: String,
    pub knee: String,
    pub ankle: String,
}

pub const H36M_17: &str = "h36m17";
pub const COCO_17: &str = "coco17";

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn group(name: &str, joints: &[usize]) -> (String, Vec<usize>) {
    (name.to_string(), joints.to_vec())
}

impl JointMap {
    /// Human3.6M 17-joint ordering, as produced by common 2D-to-3D lifters.
    pub fn h36m17() -> Self {
        Self {
            id: H36M_17.into(),
            names: names(&[
                "pelvis", "right_hip", "right_knee", "right_ankle", "left_hip", "left_knee",
                "left_ankle", "spine", "thorax", "neck", "head", "left_shoulder", "left_elbow",
                "left_wrist", "right_shoulder", "right_elbow", "right_wrist",
            ]),
            edges: vec![
                (0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6), (0, 7), (7, 8),
                (8, 9), (9, 10), (8, 11), (11, 12), (12, 13), (8, 14), (14, 15), (15, 16),
            ],
            groups: vec![
                group("Head", &[9, 10]),
                group("Shoulder", &[11, 14]),
                group("Elbow", &[12, 15]),
                group("Wrist", &[13, 16]),
                group("Body", &[0, 7, 8]),
                group("Hip", &[1, 4]),
                group("Knee", &[2, 5]),
                group("Ankle", &[3, 6]),
            ],
            pelvis: Some(0),
            torso_center: vec![7],
            left: Limbs { shoulder: 11, hip: 4, knee: 5, ankle: 6 },
            right: Limbs { shoulder: 14, hip: 1, knee: 2, ankle: 3 },
        }
    }

    /// COCO 17-keypoint ordering.
    pub fn coco17() -> Self {
        Self {
            id: COCO_17.into(),
            names: names(&[
                "nose", "left_eye", "right_eye", "left_ear", "right_ear", "left_shoulder",
                "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
                "left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle",
            ]),
            edges: vec![
                (15, 13), (13, 11), (16, 14), (14, 12), (11, 12), (5, 11), (6, 12), (5, 6),
                (5, 7), (6, 8), (7, 9), (8, 10), (1, 2), (0, 1), (0, 2), (1, 3), (2, 4),
                (3, 5), (4, 6),
            ],
            groups: vec![
                group("Head", &[0, 1, 2, 3, 4]),
                group("Shoulder", &[5, 6]),
                group("Elbow", &[7, 8]),
                group("Wrist", &[9, 10]),
                group("Body", &[]),
                group("Hip", &[11, 12]),
                group("Knee", &[13, 14]),
                group("Ankle", &[15, 16]),
            ],
            pelvis: None,
            torso_center: vec![5, 6, 11, 12],
            left: Limbs { shoulder: 5, hip: 11, knee: 13, ankle: 15 },
            right: Limbs { shoulder: 6, hip: 12, knee: 14, ankle: 16 },
        }
    }

    pub fn builtin(id: &str) -> Result<Self, DatasetError> {
        match id {
            H36M_17 => Ok(Self::h36m17()),
            COCO_17 => Ok(Self::coco17()),
            other => Err(DatasetError::UnknownJointMap(other.to_string())),
        }
    }

    pub fn limbs(&self, side: Side) -> Limbs {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::JointMap(format!("{}: {m}", self.id)));
        if self.names.len() != NUM_JOINTS {
            return bad(format!("expected {NUM_JOINTS} joints, got {}", self.names.len()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.names.iter().find(|n| !seen.insert(n.as_str())) {
            return bad(format!("duplicate joint name {dup}"));
        }
        let limbs = [self.left, self.right];
        let anchors = self
            .pelvis
            .iter()
            .chain(&self.torso_center)
            .chain(limbs.iter().flat_map(|l| [&l.shoulder, &l.hip, &l.knee, &l.ankle]))
            .chain(self.groups.iter().flat_map(|(_, g)| g))
            .chain(self.edges.iter().flat_map(|(a, b)| [a, b]));
        if let Some(i) = anchors.into_iter().find(|&&i| i >= NUM_JOINTS) {
            return bad(format!("joint index {i} out of range"));
        }
        if self.torso_center.is_empty() {
            return bad("torso_center must name at least one joint".into());
        }
        Ok(())
    }

    /// `perm[i]` is the index in `self` of joint `i` of `target`.
    /// Both maps must name the same set of joints.
    pub fn permutation_to(&self, target: &JointMap) -> Result<Vec<usize>, DatasetError> {
        target
            .names
            .iter()
            .map(|n| {
                self.index_of(n).ok_or_else(|| {
                    DatasetError::JointMap(format!(
                        "joint {n} of {} has no counterpart in {}",
                        target.id, self.id
                    ))
                })
            })
            .collect()
    }

    pub fn to_file(&self) -> JointMapFile {
        let n = |i: usize| self.names[i].clone();
        let limbs = |l: Limbs| LimbsFile {
            shoulder: n(l.shoulder),
            hip: n(l.hip),
            knee: n(l.knee),
            ankle: n(l.ankle),
        };
        JointMapFile {
            id: self.id.clone(),
            joints: self.names.clone(),
            edges: self.edges.iter().map(|&(a, b)| (n(a), n(b))).collect(),
            groups: self
                .groups
                .iter()
                .map(|(name, js)| JointGroupFile {
                    name: name.clone(),
                    joints: js.iter().map(|&j| n(j)).collect(),
                })
                .collect(),
            pelvis: self.pelvis.map(n),
            torso_center: self.torso_center.iter().map(|&j| n(j)).collect(),
            left: limbs(self.left),
            right: limbs(self.right),
        }
    }

    pub fn from_file(file: &JointMapFile) -> Result<Self, DatasetError> {
        let idx = |name: &str| {
            file.joints
                .iter()
                .position(|j| j == name)
                .ok_or_else(|| DatasetError::JointMap(format!("{}: unknown joint {name}", file.id)))
        };
        let limbs = |l: &LimbsFile| -> Result<Limbs, DatasetError> {
            Ok(Limbs {
                shoulder: idx(&l.shoulder)?,
                hip: idx(&l.hip)?,
                knee: idx(&l.knee)?,
                ankle: idx(&l.ankle)?,
            })
        };
        let map = Self {
            id: file.id.clone(),
            names: file.joints.clone(),
            edges: file
                .edges
                .iter()
                .map(|(a, b)| Ok((idx(a)?, idx(b)?)))
                .collect::<Result<_, DatasetError>>()?,
            groups: file
                .groups
                .iter()
                .map(|g| Ok((g.name.clone(), g.joints.iter().map(|j| idx(j)).collect::<Result<_, _>>()?)))
                .collect::<Result<_, DatasetError>>()?,
            pelvis: file.pelvis.as_deref().map(idx).transpose()?,
            torso_center: file.torso_center.iter().map(|j| idx(j)).collect::<Result<_, _>>()?,
            left: limbs(&file.left)?,
            right: limbs(&file.right)?,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let file: JointMapFile = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
            path: "joint map".into(),
            message: e.to_string(),
        })?;
        Self::from_file(&file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("joint map serializes")
    }
}
