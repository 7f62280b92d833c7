use std::path::PathBuf;

use thiserror::Error;

use crate::regression::TrainReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {}", .0.display())]
    UnsupportedFormat(PathBuf),

    #[error("image has zero size: {}", .0.display())]
    EmptyImage(PathBuf),

    #[error("cannot decode {}: {message}", .path.display())]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode {}: {message}", .path.display())]
    Encode { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("atmospheric light component must be positive, got {0:?}")]
    NonPositiveAirlight([f64; 3]),

    #[error("transmission must be positive, found {value} at pixel {index}")]
    NonPositiveTransmission { index: usize, value: f64 },

    #[error("image {found:?} is smaller than the {window}x{window} window")]
    ImageTooSmall { found: (usize, usize), window: usize },

    #[error("training diverged at epoch {epoch}: non-finite value")]
    Diverged {
        epoch: usize,
        partial: Box<TrainReport>,
    },

    #[error("non-finite value during update")]
    NonFinite,

    #[error("unrecognized model file: {0}")]
    UnrecognizedModel(String),

    #[error("unsupported model file version {0}")]
    ModelVersion(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("malformed manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },

    #[error("duplicate hazy path in manifest: {}", .0.display())]
    DuplicateHazy(PathBuf),

    #[error("manifest is empty")]
    EmptyManifest,

    #[error("no haze parameters")]
    NoHazeParameters,

    #[error("no readable images in {}", .0.display())]
    NoInputImages(PathBuf),

    #[error("no hazy image matched a clean image")]
    NoMatches,

    #[error("split leaves the {0} side empty")]
    EmptySplit(&'static str),

    #[error("every pair failed to evaluate")]
    AllPairsFailed,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
