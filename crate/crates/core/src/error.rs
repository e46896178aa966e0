use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("numerical failure{}: {message}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    NumericalFailure { message: String, epoch: Option<usize> },
    #[error("geometry inconsistent: {0}")]
    GeometryInconsistent(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure { message: msg.into(), epoch: None }
    }
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
