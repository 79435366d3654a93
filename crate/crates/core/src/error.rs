use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged: non-finite state at step {step} (t = {time} s)")]
    SimulationDiverged { step: usize, time: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("channel {channel} out of range (trajectory has {available} channels)")]
    InvalidChannel { channel: usize, available: usize },

    #[error("frequency band ({lo} Hz, {hi} Hz) contains no usable spectrum bins")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("degenerate library: {0}")]
    DegenerateLibrary(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty model: thresholding eliminated every column for target {target}")]
    EmptyModel { target: usize },

    #[error("ensemble failed: {failed} of {total} bootstrap fits failed")]
    EnsembleFailed { failed: usize, total: usize },

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("empty amplitude table")]
    EmptyTable,

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("ingestion error: {0}")]
    Schema(String),

    #[error("non-uniform sampling at row {row}: step deviates from dt = {dt} by {relative:.3e} (relative)")]
    NonUniformDt { row: usize, dt: f64, relative: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from reading measurement data.
    pub fn is_ingestion(&self) -> bool {
        matches!(
            self,
            Error::Ingestion { .. } | Error::Schema(_) | Error::NonUniformDt { .. }
        )
    }
}
