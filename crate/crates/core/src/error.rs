use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph output must be a scalar, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("trainable parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("loss function is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("token id {token} outside [1, {vocab}]")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("instance too large to enumerate (T={frames}, U={tokens}; limits T<=6, U<=4)")]
    TooLargeToEnumerate { frames: usize, tokens: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("corpus mixes languages {0:?}; expected exactly one")]
    MixedLanguages(Vec<String>),

    #[error("hash mismatch in {what}: stored {stored}, computed {computed}")]
    HashMismatch {
        what: String,
        stored: String,
        computed: String,
    },

    #[error("unsupported {kind} version {found} (expected {expected})")]
    VersionMismatch {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("condition bound {bound} unreachable for language `{id}` after {tries} draws")]
    ConditionUnreachable { id: String, bound: f64, tries: usize },

    #[error("traffic distribution invalid: {0}")]
    Traffic(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
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
