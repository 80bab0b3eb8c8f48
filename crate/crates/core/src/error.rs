use std::path::PathBuf;

/// Errors produced anywhere in the retrieval pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed document: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("source `{0}` is not mapped to any vertical and no default is configured")]
    UnmappedSource(String),

    #[error("invalid vertical config: {0}")]
    InvalidConfig(String),

    #[error("unknown document reference {0}")]
    UnknownDocRef(u32),

    #[error("empty query model")]
    EmptyQuery,

    #[error("empty expansion model")]
    EmptyExpansionModel,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),

    #[error("{0}: parse error: {1}")]
    Parse(String, String),

    #[error("cannot aggregate cost reports of different methods: `{0}` and `{1}`")]
    MixedMethods(String, String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("unsupported index file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
