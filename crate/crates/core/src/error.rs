use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{InferenceMode, WorkloadFamily};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid request {request_id}: {reason}")]
    InvalidRequest { request_id: String, reason: String },

    #[error("duplicate request id {0}")]
    DuplicateRequestId(String),

    #[error("profile validation failed at ({mode}, {family}): {reason}")]
    ProfileCell {
        mode: InferenceMode,
        family: WorkloadFamily,
        reason: String,
    },

    #[error("profile validation failed: {0}")]
    Profile(String),

    #[error("no profile cell for ({mode}, {family}{})", if *.batched { ", batched" } else { "" })]
    MissingCell {
        mode: InferenceMode,
        family: WorkloadFamily,
        batched: bool,
    },

    #[error("profile cell ({mode}, {family}) is marked infeasible")]
    InfeasibleCell {
        mode: InferenceMode,
        family: WorkloadFamily,
    },

    #[error("request {0} has no workload tag; dataset construction needs a family")]
    UntaggedRequest(String),

    #[error("request {request_id}: {source}")]
    Simulation {
        request_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("power trace: {0}")]
    PowerTrace(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged: {0}")]
    StepSize(String),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad flags or configuration rather than bad data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
