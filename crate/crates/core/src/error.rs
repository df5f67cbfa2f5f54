use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("metadata: {0}")]
    Metadata(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("label query: {0}")]
    LabelQuery(String),

    #[error("untokenizable document {0:?}: no alphabetic tokens")]
    Untokenizable(String),

    #[error("lexicon {0:?} is empty")]
    EmptyLexicon(String),

    #[error("document {0:?} has no sentences")]
    NoSentences(String),

    #[error("document {doc_id:?} too short: {sentences} sentences, need {needed}")]
    DocumentTooShort {
        doc_id: String,
        sentences: usize,
        needed: usize,
    },

    #[error("no document has at least {0} sentences")]
    NoEligibleDocuments(usize),

    #[error("invalid name span ({start}, {end}) in {doc_id:?}")]
    InvalidSpan { doc_id: String, start: usize, end: usize },

    #[error("embedder: {0}")]
    Embedder(String),

    #[error("bridge error at passage {index}: {message}")]
    Bridge { index: usize, message: String },

    #[error("vector length {got} does not match dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot pool zero vectors")]
    EmptyPool,

    #[error("cannot standardize: {0}")]
    Standardize(String),

    #[error("zero-norm vector in cosine")]
    ZeroNorm,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("embeddings must be standardized before building a similarity matrix")]
    Unstandardized,

    #[error("unknown doc_id {0:?}")]
    UnknownDoc(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error in {path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient comparison pool in decade {decade}: need {needed}, have {available}")]
    InsufficientPool {
        decade: i32,
        needed: usize,
        available: usize,
    },

    #[error("training diverged: non-finite objective")]
    Diverged,

    #[error("CSV schema mismatch: expected columns {expected:?}, found {found:?}")]
    Schema { expected: Vec<String>, found: Vec<String> },

    #[error("config: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data. Code 3 is reserved for panics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::UnknownLabel(_) | Error::LabelQuery(_) => 1,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
