use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoxError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("octree resolution: {0}")]
    Resolution(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VoxError>;
