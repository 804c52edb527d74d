//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest line {line}: {msg}")]
    ManifestParse { line: usize, msg: String },

    #[error("duplicate id {id} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("reference empty; WER undefined")]
    EmptyReference,

    #[error("no records")]
    EmptyRecords,

    #[error("record {id} has no reference WER")]
    MissingReference { id: String },

    #[error("τ undefined (zero variance)")]
    TauUndefined,

    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("insufficient pairs")]
    InsufficientPairs,

    #[error("unknown group key {0}")]
    UnknownGroupKey(String),

    #[error("negative value {0} in histogram input")]
    NegativeValue(f64),

    #[error("audio error: {0}")]
    Audio(String),

    #[error("line {line}: expected {expected} values")]
    EmbeddingDim { line: usize, expected: usize },

    #[error("layer {index}: {msg}")]
    LayerShape { index: usize, msg: String },

    #[error("input length {len} shorter than filter width {width}")]
    InputTooShort { len: usize, width: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unknown tag {0}")]
    UnknownTag(String),

    #[error("unknown phoneme {phoneme} in pronunciation of {word}")]
    UnknownPhoneme { phoneme: String, word: String },

    #[error("row lacks {family} features")]
    MissingFamily { family: String },

    #[error("{id}: audio required")]
    AudioRequired { id: String },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
