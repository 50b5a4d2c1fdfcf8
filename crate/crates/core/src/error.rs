use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("invalid document `{doc_id}`: {reason}")]
    InvalidDocument { doc_id: String, reason: String },

    #[error("bad magic bytes {0:?}, expected \"AWAT\"")]
    BadMagic([u8; 4]),

    #[error("unsupported dump version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("no score for candidate span [{start}, {end})")]
    MissingScore { start: usize, end: usize },

    #[error("invalid token probability {0}, expected a value in (0, 1]")]
    InvalidProbability(f64),

    #[error("empty probability list")]
    EmptyProbabilities,

    #[error("inconsistent node lists across span graphs")]
    InconsistentNodes,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("plug-in channel error: {0}")]
    Channel(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
