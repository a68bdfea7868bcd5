use std::path::PathBuf;

use thiserror::Error;

use crate::hin::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no path-token vector for node {0}")]
    MissingToken(NodeId),

    #[error("invalid meta-path schema `{schema}`: {reason}")]
    InvalidSchema { schema: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifact {path}: run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("corrupt {what}: {msg}")]
    Corrupt { what: &'static str, msg: String },

    #[error("{0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
