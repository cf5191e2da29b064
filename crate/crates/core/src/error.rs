use std::io;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("empty tile: no polygons to augment")]
    EmptyTile,
    #[error("posedness undefined: normal raster is all zero")]
    UndefinedPosedness,
    #[error("rejection sampling exhausted after {attempts} attempts (best posedness {best:.4}, threshold {rho})")]
    RejectionExhausted { attempts: usize, best: f64, rho: f64 },
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable kind tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::Data(_) => "data",
            Error::Alignment(_) => "alignment",
            Error::EmptyTile => "empty_tile",
            Error::UndefinedPosedness => "undefined_posedness",
            Error::RejectionExhausted { .. } => "rejection_exhausted",
            Error::Normalization(_) => "normalization",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Evaluation(_) => "evaluation",
            Error::TrainingAborted(_) => "training_aborted",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
