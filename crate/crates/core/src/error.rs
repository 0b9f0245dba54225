//! Crate-wide error type.
//!
//! Variants are grouped by the exit-code class the CLI maps them to:
//! config errors (2), data errors (3), and gateway errors (4).

use thiserror::Error;

use crate::gateway::SchemaId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid run configuration (bad config file, missing fixture path,
    /// missing API key variable, ...).
    #[error("config error: {0}")]
    Config(String),

    /// A FHIR bundle document that cannot be parsed. `entry` is the index
    /// of the offending bundle entry when known.
    #[error("bundle parse error{}: {detail}", fmt_entry(.entry))]
    BundleParse {
        entry: Option<usize>,
        detail: String,
    },

    /// Malformed or contract-violating input data.
    #[error("data error: {0}")]
    Data(String),

    /// Statistics over degenerate input (empty sample, zero variance, ...).
    #[error("stats error: {0}")]
    Stats(String),

    /// Transport-level gateway failure after all retries.
    #[error("gateway transport error after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },

    /// The response did not satisfy the schema named by the request, even
    /// after the re-ask. Carries the raw response for debugging.
    #[error("schema violation for {schema}: {detail}")]
    SchemaViolation {
        schema: SchemaId,
        detail: String,
        raw: String,
    },

    /// Scripted gateway had no canned response for this request.
    #[error("scripted fixture miss for {schema} (fingerprint {fingerprint})")]
    FixtureMiss {
        schema: SchemaId,
        fingerprint: String,
    },

    /// Failure while processing a specific transcript turn.
    #[error("extraction failed at {session_id} turn {turn_index}: {source}")]
    Turn {
        session_id: String,
        turn_index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Failure while reconciling a specific memory.
    #[error("reconciliation failed for {memory_id}: {source}")]
    Memory {
        memory_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_entry(entry: &Option<usize>) -> String {
    match entry {
        Some(i) => format!(" at entry {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Process exit code class: 2 config, 3 data, 4 gateway.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::BundleParse { .. }
            | Error::Data(_)
            | Error::Stats(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
            Error::Transport { .. }
            | Error::SchemaViolation { .. }
            | Error::FixtureMiss { .. } => 4,
            Error::Turn { source, .. } | Error::Memory { source, .. } => source.exit_code(),
        }
    }
}
