use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown environment kind `{0}`")]
    UnknownEnvKind(String),

    #[error("unknown category `{category}` for {env} environment")]
    UnknownCategory { env: String, category: String },

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("malformed agent turn: {0}")]
    MalformedTurn(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("scripted backend queue for `{0}` is empty")]
    QueueUnderflow(String),

    #[error("could not parse model output as JSON: {0}")]
    ParseFailure(String),

    #[error("JSON schema violation: {0}")]
    SchemaViolation(String),

    #[error("hint bank version mismatch: expected {expected}, found {found}")]
    BankVersion { expected: u32, found: u32 },

    #[error("hint bank invariant violated: {0}")]
    BankInvariant(String),

    #[error("{task_id}: serialized example is {tokens} tokens, limit {limit}")]
    TooLong { task_id: String, tokens: u64, limit: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
