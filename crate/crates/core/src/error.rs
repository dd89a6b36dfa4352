use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sentence {sentence}: invalid IOBES transition at token {token}")]
    InvalidTransition { sentence: usize, token: usize },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite loss ({loss}) on batch of {sentences} sentences / {tokens} tokens")]
    NonFinite { loss: f64, sentences: usize, tokens: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short, stable category name used for machine-readable error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::InvalidTransition { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Invalid(_) => "invalid",
            Error::NonFinite { .. } => "numeric",
        }
    }
}
