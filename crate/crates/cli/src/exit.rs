//! Process exit codes and the error type that carries them.

use std::fmt;
use std::process::ExitCode;

/// Bad flags or arguments; clap uses the same code for its own errors.
pub const USAGE: u8 = 2;
pub const CONFIG: u8 = 3;
pub const DATA: u8 = 4;
pub const PIPELINE: u8 = 5;
pub const REPLAY_MISMATCH: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: anyhow::Error) -> Self {
        Self { code, error }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub fn usage_err(e: anyhow::Error) -> Failure {
    Failure::new(USAGE, e)
}

pub fn config_err(e: anyhow::Error) -> Failure {
    Failure::new(CONFIG, e)
}

pub fn data_err(e: anyhow::Error) -> Failure {
    Failure::new(DATA, e)
}

/// Maps a library error to the exit code of its class.
pub fn classify(e: xabsa::Error) -> Failure {
    use xabsa::Error as E;
    let code = match &e {
        E::Config(_) => CONFIG,
        E::Parse { .. } | E::TaskMismatch { .. } | E::Io(_) | E::Json(_) | E::SchemaViolation { .. } => DATA,
        E::SpanNotInSentence { .. } | E::EmptyAspect | E::EmptyOpinion => DATA,
        _ => PIPELINE,
    };
    Failure::new(code, e.into())
}
