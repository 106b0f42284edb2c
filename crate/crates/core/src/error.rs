use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stage chain mismatch: stage `{stage}` has docs_in={docs_in} but previous docs_out={previous_out}")]
    ChainMismatch {
        stage: String,
        docs_in: u64,
        previous_out: u64,
    },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no scorer available for filter `{0}`")]
    MissingScorer(&'static str),

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(u32),

    #[error("model format error: {0}")]
    ModelFormat(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a violated operation contract rather than
    /// by configuration or I/O.
    pub fn is_contract_violation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Config(_))
    }
}
