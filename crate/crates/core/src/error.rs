use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data, schema violations, inconsistent files.
    Data,
    /// I/O failures, numerical divergence and other failures at run time.
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),

    #[error("class {label:?}{} has {available} records, {requested} requested", language.as_ref().map(|l| format!(" in language {l:?}")).unwrap_or_default())]
    InsufficientShots {
        label: String,
        language: Option<String>,
        available: usize,
        requested: usize,
    },

    #[error("semantic key {key:?} has no translation in {language:?}")]
    MissingTranslation { key: String, language: String },

    #[error("semantic key {key:?} has {count} records in {language:?}, expected one")]
    AmbiguousTranslation {
        key: String,
        language: String,
        count: usize,
    },

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("vector norm {0:e} is too close to zero")]
    ZeroVector(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no embedding for record {0:?}")]
    MissingEmbedding(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u16 },

    #[error("truncated input: need {expected} bytes at offset {offset}, only {actual} available")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("unbalanced index: {0}")]
    Unbalanced(String),

    #[error("index entries differ: {0}")]
    IndexMismatch(String),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("no neighbors to vote over")]
    NoNeighbors,

    #[error("need at least 2 classes to train, found {0}")]
    TooFewClasses(usize),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("prediction ids do not match gold ids: {0}")]
    IdMismatch(String),

    #[error("sweep tables disagree: {0}")]
    GridMismatch(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checksum of {path} changed since the manifest was written")]
    InputChanged { path: PathBuf },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Diverged { .. } | Error::ThreadPool(_) => ErrorKind::Runtime,
            Error::Stage { source, .. } => source.kind(),
            Error::Csv(e) if e.is_io_error() => ErrorKind::Runtime,
            _ => ErrorKind::Data,
        }
    }
}
