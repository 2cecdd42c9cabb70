use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("OBJ parse error at line {line}: {message}")]
    Obj { line: usize, message: String },

    #[error("depth {depth} m outside [{z_near}, {z_far}]")]
    DepthOutOfRange { depth: f64, z_near: f64, z_far: f64 },

    #[error("grid size mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    GridMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid cloud: {0}")]
    Cloud(String),

    #[error("invalid bounding box: {0}")]
    BoundingBox(String),

    #[error("invalid likelihood weights: {0}")]
    Weights(String),

    #[error("invalid filter config: {0}")]
    Config(String),

    #[error("no detections for class '{0}'")]
    NoDetections(String),

    #[error("object out of view")]
    OutOfView,

    #[error("prior {context}: {message}")]
    Prior { context: String, message: String },

    #[error("PGM: {0}")]
    Pgm(String),

    #[error("{0}")]
    Invalid(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
