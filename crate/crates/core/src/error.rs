use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("cutoff at/above Nyquist: {cutoff_hz} Hz with fs {fs} Hz")]
    NyquistCutoff { cutoff_hz: f64, fs: f64 },

    #[error("signal too short: {len} samples, need more than {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence {
        epoch: usize,
        reason: String,
        history: Vec<crate::gan::EpochStats>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("text {text:?} cannot be encoded: {reason}")]
    InvalidText { text: String, reason: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("corrupt header in {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the name of the pipeline stage that raised it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
