use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed .vec header: {0}")]
    MalformedHeader(String),

    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: non-finite or unparsable value {value:?}")]
    BadValue { line: usize, value: String },

    #[error("no usable rows in embedding file")]
    EmptyEmbeddings,

    #[error("zero-norm row for token {0:?}")]
    ZeroNorm(String),

    #[error("dictionary line {line}: expected 2 fields, found {found}")]
    DictionaryFormat { line: usize, found: usize },

    #[error("every dictionary pair was out of vocabulary ({src_oov} source, {tgt_oov} target)")]
    AllPairsDropped { src_oov: usize, tgt_oov: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("model file has a corrupt header: {0}")]
    CorruptHeader(String),

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("RCSLS loss requires candidate pools")]
    MissingPools,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("k = {k} exceeds candidate count {available}")]
    KTooLarge { k: usize, available: usize },

    #[error("gradient check failed: max relative error {max_rel_err:e} exceeds {tolerance:e}")]
    GradCheck {
        max_rel_err: f64,
        tolerance: f64,
        /// (tensor index, flat entry index) of every offending parameter.
        offending: Vec<(usize, usize)>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
