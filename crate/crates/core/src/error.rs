use std::path::PathBuf;

use thiserror::Error;

use crate::tagging::FormatError;
use crate::types::Task;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tuple {tuple} does not conform to the {task} schema")]
    SchemaViolation { tuple: String, task: Task },

    #[error("span {span:?} is not a contiguous subsequence of the sentence")]
    SpanNotInSentence { span: String },

    #[error("aspect span must be non-empty")]
    EmptyAspect,

    #[error("opinion span, when present, must be non-empty")]
    EmptyOpinion,

    #[error("invalid label sequence: {0}")]
    Format(#[from] FormatError),

    #[error("training requires at least one pair")]
    EmptyTrainingSet,

    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("unknown token id {0}")]
    UnknownToken(usize),

    #[error("unknown token {0:?}")]
    UnknownWord(String),

    #[error("length mismatch: {predictions} predictions vs {golds} gold sentences")]
    LengthMismatch { predictions: usize, golds: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corpus {path} was written for task {found}, expected {expected}")]
    TaskMismatch {
        path: PathBuf,
        expected: Task,
        found: Task,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
