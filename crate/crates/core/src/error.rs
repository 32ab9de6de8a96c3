use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("NIfTI: {0}")]
    Nifti(String),

    #[error("lesion records, row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error("lesion {lesion_id}: {message}")]
    Lesion { lesion_id: String, message: String },

    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(String),

    #[error("trimap: {0}")]
    Trimap(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("phantom: {0}")]
    Phantom(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
