use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shotpose::analysis::TsneConfig;
use shotpose::grae::GraeConfig;

use crate::PipelineError;

/// Everything a pipeline run depends on. Loaded from JSON; missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub joint_map: String,
    /// `grae.seed` is replaced by `seed`.
    pub grae: GraeConfig,
    pub k: usize,
    pub kmeans_max_iter: usize,
    /// Largest k in the inertia table.
    pub inertia_k_max: usize,
    pub pca_baseline: bool,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub pdj_threshold: f64,
    pub iou_threshold: f64,
    pub selection_threshold: f64,
    /// Seeds training, k-means and t-SNE.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data/synthetic12"),
            joint_map: "h36m17".into(),
            grae: GraeConfig::default(),
            k: 3,
            kmeans_max_iter: 300,
            inertia_k_max: 8,
            pca_baseline: true,
            perplexity: 30.0,
            tsne_iterations: 1000,
            pdj_threshold: 0.5,
            iou_threshold: 0.5,
            selection_threshold: 0.5,
            seed: 0,
            out: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        // relative dataset paths are taken relative to the config file
        if config.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                config.dataset = dir.join(&config.dataset);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !self.dataset.is_dir() {
            return bad(format!("dataset directory {} does not exist", self.dataset.display()));
        }
        self.grae.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.kmeans_max_iter == 0 || self.tsne_iterations == 0 {
            return bad("iteration counts must be positive".into());
        }
        if !(self.perplexity > 1.0) {
            return bad(format!("perplexity {} must exceed 1", self.perplexity));
        }
        for (name, v) in [
            ("pdj_threshold", self.pdj_threshold),
            ("iou_threshold", self.iou_threshold),
            ("selection_threshold", self.selection_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn grae_config(&self) -> GraeConfig {
        GraeConfig { seed: self.seed, ..self.grae.clone() }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig { perplexity: self.perplexity, iterations: self.tsne_iterations, seed: self.seed, ..TsneConfig::default() }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { out: PathBuf::new(), grae: self.grae_config(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
