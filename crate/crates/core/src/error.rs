use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image decode failed at byte offset {offset}: {message}")]
    Decode { offset: u64, message: String },

    #[error("image encode failed: {0}")]
    Encode(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("expected {expected} channel(s), found {found}")]
    WrongChannels { expected: &'static str, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("mask generation failed after {attempts} attempts")]
    MaskGeneration { attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("feature column `{column}` is constant and cannot be standardized")]
    ConstantFeature { column: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("manifest schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
