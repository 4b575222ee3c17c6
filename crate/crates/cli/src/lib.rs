//! Pipeline stages behind the `shotpose` command line: each command reads and writes
//! plain artifacts in an output directory so stages can be rerun independently.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod fixtures;
pub mod svg;

use std::path::Path;

use shotpose::analysis::AnalysisError;
use shotpose::dataset::DatasetError;
use shotpose::grae::GraeError;
use shotpose::kinematics::KinematicsError;
use shotpose::metrics::MetricsError;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing {artifact}: run `shotpose {producer}` first")]
    MissingArtifact { artifact: String, producer: &'static str },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Artifact { path: String, message: String },
    #[error("dataset validation failed for {0} clip(s)")]
    ValidationFailed(usize),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Grae(#[from] GraeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }
}
