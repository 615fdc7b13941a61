use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {0:e} is too small to normalize")]
    DegenerateQuaternion(f64),
    #[error("point is behind the camera (z = {z}, near plane = {near})")]
    BehindCamera { z: f64, near: f64 },
    #[error("invalid hierarchy configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("background position {0} has (near) zero norm")]
    DegeneratePosition(usize),
    #[error("projected covariance of gaussian {index} is singular (det = {det:e})")]
    SingularCovariance { index: usize, det: f64 },
    #[error("k = {k} is invalid for {n} points (need 1 <= k < n)")]
    InvalidK { k: usize, n: usize },
    #[error("pose embedding {0} has zero norm")]
    ZeroNormEmbedding(usize),
    #[error("unknown synthetic scene '{0}'")]
    UnknownSpec(String),
    #[error("loss diverged at iteration {iteration} (value {value})")]
    DivergedLoss { iteration: usize, value: f64 },
    #[error("bad magic bytes in scene file")]
    BadMagic,
    #[error("unsupported scene file version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("scene file is truncated")]
    TruncatedFile,
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
