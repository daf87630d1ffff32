use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input at index {index}: {reason}")]
    InvalidInput { index: usize, reason: String },

    #[error("spectral inconsistency: imaginary residue {residue:e} exceeds threshold {threshold:e}")]
    SpectralInconsistency { residue: f64, threshold: f64 },

    #[error("shape mismatch: {left_label} is {left:?} but {right_label} is {right:?}")]
    Shape {
        left_label: &'static str,
        left: (usize, usize),
        right_label: &'static str,
        right: (usize, usize),
    },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("cannot ingest {}: {reason}", path.display())]
    Ingestion { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("integrity error for {}: {reason}", path.display())]
    Integrity { path: PathBuf, reason: String },

    #[error("unmatched files: {}", orphans.join(", "))]
    Pairing { orphans: Vec<String> },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid_input",
            Error::SpectralInconsistency { .. } => "spectral_inconsistency",
            Error::Shape { .. } => "shape",
            Error::Parameter(_) => "parameter",
            Error::Configuration(_) => "configuration",
            Error::Ingestion { .. } => "ingestion",
            Error::Manifest(_) => "manifest",
            Error::Integrity { .. } => "integrity",
            Error::Pairing { .. } => "pairing",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
