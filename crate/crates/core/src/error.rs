use std::path::PathBuf;

/// Errors produced across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    ConfigViolations(Vec<String>),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("missing artifact {path:?}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("output directory is locked by {path:?}; another stage may be running (remove the file if stale)")]
    Locked { path: PathBuf },

    #[error("artifact format error in {path:?}: {reason}")]
    ArtifactFormat { path: PathBuf, reason: String },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
