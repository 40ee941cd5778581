use thiserror::Error;

/// Errors produced by the geometry, prior, rendering and optimization layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth:e})")]
    PointBehindCamera { depth: f64 },

    #[error("face index {face} out of range ({count} faces)")]
    FaceOutOfRange { face: usize, count: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("cameras differ in intrinsics or image size")]
    IntrinsicsMismatch,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("mesh topology does not match the prior template")]
    TopologyMismatch,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no sample is visible in both views")]
    NoVisibleSamples,

    #[error("loss or gradient became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("point set is empty")]
    EmptySet,

    #[error("mesh surface area is degenerate")]
    DegenerateMesh,

    #[error("no pixel is covered by both meshes in any view")]
    NoOverlap,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
