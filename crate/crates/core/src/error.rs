//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A pass flag that is not a member of the loaded vocabulary.
    #[error("unknown pass: {0}")]
    UnknownPass(String),

    /// Several unknown passes reported together, as from sequence validation.
    #[error("unknown passes: {}", .0.join(", "))]
    UnknownPasses(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    /// Tool rejected the input; carries the tool's stderr.
    #[error("compile error: {0}")]
    Compile(String),

    #[error("evaluation timed out after {0} s")]
    Timeout(u64),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty results directory")]
    EmptyResults,

    /// The configured chat endpoint could not be reached at all.
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),

    /// Teacher proposed a final sequence that does not match the trace's optimal sequence.
    #[error("rationale rejected for {program}: proposed {proposed:?}, expected {expected:?}")]
    RationaleRejected {
        program: String,
        proposed: Vec<String>,
        expected: Vec<String>,
    },

    /// Required external tool or endpoint is missing from the environment.
    #[error("environment: {0}")]
    Environment(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
