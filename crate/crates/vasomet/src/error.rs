//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error at {path}: {msg}")]
    Json { path: PathBuf, msg: String },
    #[error("manifest line {line}: {msg}")]
    ManifestRow { line: u64, msg: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no vessels rooted at the optic disc ({system})")]
    NoRootedVessels { system: &'static str },
    #[error("undefined direction: {0}")]
    UndefinedDirection(String),
    #[error("synthetic spec error at segment {segment}: {msg}")]
    SynthSpec { segment: String, msg: String },
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
