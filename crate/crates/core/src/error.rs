//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the disaggregation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no channel named \"aggregate\" among the inputs")]
    NoAggregateChannel,

    #[error("duplicate channel id {0:?}")]
    DuplicateChannel(String),

    #[error("empty intersection of channel time ranges")]
    EmptyIntersection,

    #[error("{what} must be strictly positive (got {value})")]
    NonPositive { what: &'static str, value: f64 },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("unknown appliance id {0:?}")]
    UnknownAppliance(String),

    #[error("appliance pool group {0:?} is empty")]
    EmptyProfileGroup(String),

    #[error("pool appliance {0:?} is neither a labeled target nor a declared distractor")]
    UnmappedPoolAppliance(String),

    #[error("table has {len} rows but windows need at least {need}")]
    TableTooShort { len: usize, need: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint does not match the requested configuration: {0}")]
    CheckpointMismatch(String),

    #[error("training loss became non-finite at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize },

    #[error("malformed input file {path}: {detail}")]
    MalformedInput { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
