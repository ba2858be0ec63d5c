use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid strategy profile: {0}")]
    InvalidProfile(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid grid point: {0}")]
    InvalidGridPoint(String),

    #[error("invalid simplex: {0}")]
    InvalidSimplex(String),

    #[error("simplex is not stopping")]
    NotStopping,

    #[error("instance too large for exhaustive enumeration: {size} exceeds limit {limit}")]
    TooLarge { size: u128, limit: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown solver method `{0}`")]
    UnknownMethod(String),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
