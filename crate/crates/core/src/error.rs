//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

/// Errors surfaced by the segmentation library.
///
/// Variants distinguish bad input data (dimension mismatches, empty corpora,
/// unreadable or corrupt files) from conditions the pipeline handles
/// internally. Callers that need process exit codes can treat every variant
/// here as a data error; panics are reserved for programming bugs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("image dimensions {0}x{1} and {2}x{3} do not match")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("requested {k} clusters but only {points} points are available")]
    InvalidK { k: usize, points: usize },

    #[error("channel {0} sums to zero; white balance is undefined")]
    ZeroChannel(usize),

    #[error("no candidate region was produced at any cluster count")]
    NoRegions,

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("no regression samples were generated from the corpus")]
    NoSamples,

    #[error("image {0} has no matching mask (expected {1})")]
    MissingMask(PathBuf, PathBuf),

    #[error("file {path} was written by format version {found}, expected {expected}")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("file {path} is corrupt: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Helper for wrapping I/O failures with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Helper for wrapping image decode failures with the offending path.
    pub fn decode(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Decode {
            path: path.into(),
            source,
        }
    }

    /// Helper for corrupt-file errors.
    pub fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
