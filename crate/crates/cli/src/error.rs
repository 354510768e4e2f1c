use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: itinerant_core::Error,
    },

    #[error(transparent)]
    Core(#[from] itinerant_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Config(_) => return 2,
            CliError::Stage { source, .. } => source,
            CliError::Core(e) => e,
            CliError::Io(_) => return 1,
        };
        match core {
            itinerant_core::Error::InvalidConfig { .. } => 2,
            e if e.is_divergence() => 3,
            _ => 1,
        }
    }
}

/// Attach a stage name to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for itinerant_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
