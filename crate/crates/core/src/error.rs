use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh {path:?} at line {line}: {message}")]
    MalformedMesh {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("empty geometry: {0}")]
    EmptyGeometry(&'static str),
    #[error("degenerate object: bounding radius is zero")]
    DegenerateObject,
    #[error("point lies at or behind the camera plane (z = {0})")]
    BehindCamera(f64),
    #[error("degenerate grasp: {0}")]
    DegenerateGrasp(&'static str),
    #[error("degenerate projection: contacts project to the same pixel")]
    DegenerateProjection,
    #[error("positive score must lie in (0, 1], got {0}")]
    InvalidScore(f64),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("contrastive batch needs at least 2 samples, got {0}")]
    InsufficientNegatives(usize),
    #[error("rotated region lies entirely outside the feature grid")]
    EmptyRegion,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid depth file {path:?}: {message}")]
    DepthFormat { path: PathBuf, message: String },
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
