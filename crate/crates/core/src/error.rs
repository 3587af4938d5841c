use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph was already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("non-finite gradient for parameter `{0}`; step aborted")]
    NonFiniteGradient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("schema does not match checkpoint: {0}")]
    SchemaMismatch(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
        checkpoint: Option<PathBuf>,
    },

    #[error(
        "{n} features is too many for exhaustive enumeration (max {max}); use Monte-Carlo sampling"
    )]
    TooManyFeatures { n: usize, max: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("I/O error on {path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn path(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Path {
            path: path.into(),
            source,
        }
    }
}
