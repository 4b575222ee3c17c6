//! Versioned CSV artifacts. Every file starts with a comment line carrying the
//! format version, the run-config hash and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::PipelineError;

pub const FORMAT_VERSION: u32 = 1;

pub const TRAIN_HISTORY: &str = "train_history.csv";
pub const MODEL: &str = "model.json";
pub const LATENTS: &str = "latents.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const CLUSTERS_PCA: &str = "clusters_pca.csv";
pub const INERTIA: &str = "inertia.csv";
pub const SHOT_STATS: &str = "shot_stats.csv";
pub const CLUSTER_STATS: &str = "cluster_stats.csv";
pub const TSNE: &str = "tsne.csv";
pub const TSNE_KL: &str = "tsne_kl.csv";
pub const VALIDATION: &str = "validation.csv";
pub const POSE_EVAL: &str = "pose_eval.json";
pub const DETECTION_EVAL: &str = "detection_eval.json";
pub const TRACKING_EVAL: &str = "tracking_eval.json";
pub const SELECTION_EVAL: &str = "selection_eval.json";
pub const REPORT_DIR: &str = "report";

/// Command that writes each artifact, for dependency errors.
pub fn producer(artifact: &str) -> &'static str {
    match artifact {
        MODEL | TRAIN_HISTORY => "train",
        LATENTS => "embed",
        CLUSTERS | CLUSTERS_PCA | INERTIA => "cluster",
        SHOT_STATS | CLUSTER_STATS => "stats",
        TSNE | TSNE_KL => "tsne",
        VALIDATION => "validate",
        POSE_EVAL => "eval-pose",
        DETECTION_EVAL => "eval-detect",
        TRACKING_EVAL => "eval-track",
        SELECTION_EVAL => "eval-select",
        _ => "run",
    }
}

pub fn header(config: &RunConfig) -> String {
    format!("# format={FORMAT_VERSION} config_hash={} seed={}", config.hash(), config.seed)
}

/// Path of an upstream artifact, or a dependency error naming its producer.
pub fn require(out: &Path, artifact: &str) -> Result<PathBuf, PipelineError> {
    let path = out.join(artifact);
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { artifact: artifact.to_string(), producer: producer(artifact) })
    }
}

pub fn write_csv(path: &Path, config: &RunConfig, columns: &[&str], rows: &[Vec<String>]) -> Result<(), PipelineError> {
    let mut buf = header(config).into_bytes();
    buf.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| PipelineError::Artifact { path: path.display().to_string(), message: e.to_string() };
        w.write_record(columns).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| PipelineError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| PipelineError::io(path, e))
}

pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub config_hash: Option<String>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn read_csv(out: &Path, artifact: &str, config: &RunConfig) -> Result<CsvTable, PipelineError> {
    let path = require(out, artifact)?;
    let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    let bad = |m: String| PipelineError::Artifact { path: path.display().to_string(), message: m };
    let first = text.lines().next().unwrap_or_default();
    let field = |key: &str| {
        first.split_whitespace().find_map(|t| t.strip_prefix(key).map(str::to_string))
    };
    match field("format=").as_deref() {
        Some(v) if v == FORMAT_VERSION.to_string() => {}
        other => return Err(bad(format!("unsupported artifact format {other:?}"))),
    }
    let config_hash = field("config_hash=");
    if config_hash.as_deref() != Some(config.hash().as_str()) {
        log::warn!("{} was produced under a different configuration", path.display());
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let columns = reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect());
    }
    Ok(CsvTable { columns, rows, config_hash })
}

pub fn parse_f64(s: &str, what: &str) -> Result<f64, PipelineError> {
    s.parse().map_err(|_| PipelineError::Artifact { path: what.to_string(), message: format!("not a number: {s:?}") })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}
