use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{param_names, GraeConfig, GraeError, GraeModel, Result};
use crate::dataset::NUM_JOINTS;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: GraeConfig,
    pub edges: Vec<(usize, usize)>,
    pub params: Vec<ParamArray>,
}

impl Checkpoint {
    pub fn from_model(model: &GraeModel) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            edges: model.adjacency.edges.clone(),
            params: param_names()
                .into_iter()
                .zip(&model.params)
                .map(|(name, p)| ParamArray { name, shape: p.shape().to_vec(), data: p.data().to_vec() })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<GraeModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(GraeError::Version { found: self.format_version, expected: CHECKPOINT_VERSION });
        }
        let names = param_names();
        let mut params = Vec::with_capacity(self.params.len());
        for (i, p) in self.params.into_iter().enumerate() {
            if names.get(i) != Some(&p.name) {
                return Err(GraeError::CheckpointMismatch(format!("parameter {i} is named {}", p.name)));
            }
            params.push(Tensor::parameter(p.shape, p.data)?);
        }
        let adjacency = super::build_adjacency(NUM_JOINTS, &self.edges)?;
        GraeModel::from_parts(self.config, adjacency, params)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Read the version first so a future layout reports a version error, not a parse error.
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| GraeError::Checkpoint(e.to_string()))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(GraeError::Version { found: header.format_version, expected: CHECKPOINT_VERSION });
        }
        serde_json::from_str(text).map_err(|e| GraeError::Checkpoint(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }
}

pub fn save_checkpoint(model: &GraeModel, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::from_model(model).to_json())
        .map_err(|e| GraeError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<GraeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| GraeError::Checkpoint(format!("{}: {e}", path.display())))?;
    Checkpoint::from_json(&text)?.into_model()
}
