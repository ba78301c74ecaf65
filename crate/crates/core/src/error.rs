use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("self-loop at line {line} ({node} -> {node})")]
    SelfLoop { line: usize, node: usize },

    #[error("duplicate edge at line {line} ({src} -> {dst})")]
    DuplicateEdge { line: usize, src: usize, dst: usize },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid hazard specification: {0}")]
    InvalidHazard(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time step too large: per-step probability {prob:.4} exceeds {cap} ({source_name})")]
    StepTooLarge {
        prob: f64,
        cap: f64,
        source_name: &'static str,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
