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

    #[error("malformed image file: {0}")]
    Format(String),

    #[error("missing directory: {0}")]
    MissingDirectory(PathBuf),

    #[error("no frame files found in {0}")]
    NoFrames(PathBuf),

    #[error("gap in frame numbering: expected frame_{expected:06}")]
    FrameGap { expected: usize },

    #[error("mixed dimensions: frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    MixedDimensions {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("unsupported bit depth: maxval {0} (only 255 is accepted)")]
    UnsupportedBitDepth(u32),

    #[error("empty frame sequence")]
    EmptySequence,

    #[error("shape violation: {0}")]
    Shape(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-informative feature (all components equal)")]
    NonInformativeFeature,

    #[error("malformed share block at ({row}, {col})")]
    MalformedShare { row: usize, col: usize },

    #[error("negative score {0}")]
    NegativeScore(f64),

    #[error("need at least 2 records, got {0}")]
    InsufficientRecords(usize),

    #[error("empty score list")]
    EmptyScores,

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("unknown record id {0:?}")]
    UnknownId(String),

    #[error("corrupt registry: {0}")]
    Corrupt(String),

    #[error("registry is closed")]
    RegistryClosed,

    #[error("registry is read-only")]
    ReadOnly,

    #[error("registry {0} is locked by another writer")]
    Locked(PathBuf),

    #[error("invalid attack parameter: {0}")]
    InvalidAttack(String),

    #[error("attack family {0} requires a seed")]
    MissingSeed(&'static str),

    #[error("frame count mismatch: {left} vs {right}")]
    FrameCountMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
