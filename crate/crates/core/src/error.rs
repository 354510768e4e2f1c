use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("numerical divergence at t = {t_ms} ms")]
    Divergence { t_ms: f64 },

    #[error("singular system in {context}; use a ridge/regularization parameter > 0")]
    Singular { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
