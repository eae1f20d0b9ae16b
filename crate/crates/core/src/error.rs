use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    // corpus
    #[error("empty work: {0}")]
    EmptyWork(String),
    #[error("duplicate label: {0}")]
    DuplicateLabel(String),
    #[error("work shorter than window: {label} has {lines} lines, window is {window}")]
    WorkShorterThanWindow {
        label: String,
        lines: usize,
        window: usize,
    },
    #[error("{split} block of {label} has {lines} lines, shorter than window {window}")]
    BlockShorterThanWindow {
        label: String,
        split: &'static str,
        lines: usize,
        window: usize,
    },
    #[error("split ratios must sum to 1 (got {0})")]
    BadRatios(f64),
    #[error("invalid manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    // phonology / scansion
    #[error("character {ch:?} is not Latin orthography (in {word:?})")]
    NotLatin { ch: char, word: String },
    #[error("word without a vowel: {0:?}")]
    NoVowel(String),
    #[error("unscannable line: {0}")]
    Unscannable(String),

    // encoding
    #[error("empty token stream")]
    EmptyStream,
    #[error("empty line in sample (row {0})")]
    EmptyLine(usize),
    #[error("line {row} has {len} syllables, more than the {max} grid columns")]
    LineTooLong { row: usize, len: usize, max: usize },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    // nn
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("id {id} out of range for vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch normalization needs at least 2 samples in training mode")]
    BatchTooSmall,
    #[error("dropout rate must lie in [0, 1), got {0}")]
    DropoutRate(f64),
    #[error("fully masked sequence (sample {0})")]
    FullyMasked(usize),

    // models / attention / analysis
    #[error("lexicon mismatch: checkpoint {expected:016x}, supplied {found:016x}")]
    LexiconMismatch { expected: u64, found: u64 },
    #[error("no layer named {0:?}")]
    NoSuchLayer(String),
    #[error("layer {0:?} is not convolutional")]
    NotConvolutional(String),
    #[error("model has no embedding layer")]
    NoEmbedding,
    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("degenerate matrix: rank below 2")]
    Degenerate,
    #[error("class {name} has only {members} members (need at least 5)")]
    ClassTooSmall { name: String, members: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Read {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }
}
