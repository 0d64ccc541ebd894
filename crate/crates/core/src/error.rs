use std::path::PathBuf;

use thiserror::Error;

use crate::{eval::EvalError, nn::NnError, platform::PlatformError, preprocess::PreprocessError,
    sim::SimError, trace_io::TraceError, train::TrainError, workload::WorkloadError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Each variant wraps the error of one pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("missing {artifact} ({path}); run `{command}` first")]
    MissingArtifact {
        artifact: String,
        path: PathBuf,
        command: &'static str,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Manifest(_) => 2,
            Error::Io { .. } => 3,
            Error::MissingArtifact { .. } => 4,
            Error::Platform(_) | Error::Workload(_) | Error::Trace(_) | Error::Json { .. } => 5,
            Error::Sim(_) => 6,
            Error::Preprocess(_) | Error::Nn(_) | Error::Train(_) | Error::Checkpoint(_) => 7,
            Error::Eval(_) => 8,
        }
    }
}
