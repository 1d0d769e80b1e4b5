use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape propagation failed at layer `{layer}`: {reason}")]
    ShapeError { layer: String, reason: String },

    #[error("non-finite value produced at layer `{0}`")]
    NonFinite(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("layer `{0}` is not on the path to the output head")]
    LayerOffPath(String),

    #[error("model head is not global-average-pool -> softmax")]
    NotGapModel,

    #[error("blob length mismatch: expected {expected} bytes, got {actual}")]
    BlobLength { expected: usize, actual: usize },

    #[error("unsupported dtype `{0}`")]
    UnknownDtype(String),

    #[error("bad file format: {0}")]
    BadFormat(String),

    #[error("class balancing impossible: {0}")]
    BalanceError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
