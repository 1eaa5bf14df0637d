use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),

    #[error("no case files found under {0}")]
    NoCaseFiles(PathBuf),

    #[error("duplicate case id `{0}`")]
    DuplicateCaseId(String),

    #[error("case `{0}` is empty after language filtering")]
    EmptyCase(String),

    #[error("malformed record in {path} at line {line}: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown case id `{0}`")]
    UnknownCase(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero vector cannot be normalized")]
    ZeroNorm,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),

    #[error("transcript miss for request {0}")]
    TranscriptMiss(String),

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },

    #[error("backend returned status {status}: {message}")]
    Backend { status: u16, message: String },

    #[error("degenerate loss: {0}")]
    DegenerateLoss(String),

    #[error("batch construction error: {0}")]
    BatchConstruction(String),

    #[error("non-finite loss at step {step} (example for query `{query_id}`)")]
    Divergence { step: usize, query_id: String },

    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {path}: run stage '{stage}' first")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("json error: {0}")]
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
