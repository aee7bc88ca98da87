use thiserror::Error;

/// Errors produced anywhere in the detection stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {index} has (near-)zero norm")]
    ZeroVectorRow { index: usize },

    #[error("column {index} has (near-)zero norm")]
    ZeroVectorColumn { index: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("reduced feature column {column} is (near-)zero; cosine undefined")]
    ZeroFeature { column: usize },

    #[error("loss is not finite")]
    NonFiniteLoss,

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("class {class} is degenerate: {samples} usable samples ({reason})")]
    DegenerateClass {
        class: usize,
        samples: usize,
        reason: &'static str,
    },

    #[error("abnormal events are not detectable: tpr lower bound {tpr_lower} <= fpr upper bound {fpr_upper}")]
    NotDetectable { tpr_lower: f64, fpr_upper: f64 },

    #[error("malformed input row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::DomainError(msg.into())
}
