use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: seamlab::Error,
    },
    #[error("corrupt run: {0}")]
    CorruptRun(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for validation and data problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Stage { source, .. } => match source {
                seamlab::Error::NumericalFailure { .. }
                | seamlab::Error::DegenerateSpectrum(_)
                | seamlab::Error::DegenerateModel(_)
                | seamlab::Error::GeometryInconsistent(_) => 2,
                _ => 1,
            },
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

/// Attaches run-stage context to core errors.
pub(crate) trait StageContext<V> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<V>;
}

impl<V> StageContext<V> for seamlab::Result<V> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<V> {
        self.map_err(|source| CliError::Stage { stage: stage(), source })
    }
}

pub type Result<V, E = CliError> = std::result::Result<V, E>;
