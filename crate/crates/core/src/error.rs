use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown pose code `{0}`")]
    UnknownPoseCode(String),

    #[error("invalid pose map: {0}")]
    InvalidPoseMap(String),

    #[error("cannot decode image {path}: {reason}")]
    UndecodableImage { path: PathBuf, reason: String },

    #[error("corpus under {0} contains no frontal records")]
    EmptyCorpus(PathBuf),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("weight sharing is disabled on this generator pair")]
    SharingDisabled,

    #[error("shared parameter `{name}` diverged between generators (max |diff| = {max_diff})")]
    SharingViolated { name: String, max_diff: f64 },

    #[error("loss term `{0}` has positive weight but its inputs were not provided")]
    MissingInput(&'static str),

    #[error("non-finite loss at epoch {epoch} step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error(
        "singular covariance: eigenvalue {min_eigenvalue} below tolerance, spectrum {spectrum:?}"
    )]
    SingularCovariance {
        min_eigenvalue: f64,
        spectrum: Vec<f64>,
    },

    #[error("similarity provider failed: {0}")]
    ProviderFailure(String),

    #[error("manifest parse error at line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
