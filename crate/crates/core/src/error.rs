use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FtlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FtlError {
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NonSymmetric { max_asymmetry: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u16, expected: u16 },

    #[error("corrupt record: {0}")]
    CorruptRecord(String),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at iteration {iteration} ({phase})")]
    Diverged { phase: &'static str, iteration: usize },

    #[error("gallery needs at least two classes, got {0}")]
    EmptyGallery(usize),
}

impl FtlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FtlError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: usize, got: usize) -> Self {
        FtlError::DimensionMismatch { expected, got }
    }
}

/// Returns `DimensionMismatch` unless `expected == got`.
pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FtlError::dims(expected, got))
    }
}
