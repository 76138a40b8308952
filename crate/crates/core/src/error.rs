use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad feature file format: {0}")]
    Format(String),

    #[error("feature payload length mismatch: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    #[error("non-finite value at index {index}")]
    Value { index: usize },

    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },

    #[error("manifest line {line}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        classes: usize,
    },

    #[error("manifest line {line}: fold {fold} out of range for k = {k}")]
    FoldOutOfRange { line: usize, fold: usize, k: usize },

    #[error("fold {fold} has no records")]
    MissingFold { fold: usize },

    #[error("manifest references missing feature file {}", path.display())]
    DanglingFile { path: PathBuf },

    #[error("manifest parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("no published reference for {0}")]
    Lookup(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
