use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or batch dimensions that do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument outside the domain of the operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An API used out of order, e.g. a stale forward cache or a missing gradient.
    #[error("usage error: {0}")]
    Usage(String),

    /// Config validation failed; every violation is listed.
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    /// Training produced a non-finite loss or similar numerical failure.
    #[error("runtime failure: {0}")]
    Runtime(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (config, arguments, data schema)
    /// rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::ConfigParse(_) | Error::Argument(_) | Error::Data { .. } => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
