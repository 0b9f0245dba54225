//! Structured-output chat completions.
//!
//! Every LLM stage goes through one [`Gateway`] interface. The live
//! implementation speaks the OpenAI-compatible chat-completions wire
//! format; the scripted implementation plays back canned responses keyed
//! by request fingerprint, which is what makes full pipeline runs
//! reproducible byte for byte. Responses are always validated locally
//! against the schema the request names, whatever the transport said.

pub mod audit;
pub mod http;
pub mod schemas;
pub mod scripted;

pub use audit::{read_audit_log, AuditEntry, AuditLog};
pub use http::{GatewayConfig, HttpGateway};
pub use scripted::{FallbackMode, FixtureEntry, ScriptedGateway};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Names the response schema a request expects; the gateway validates the
/// response against it before returning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    MemoryDelta,
    ReconciliationResult,
    JudgeEvent,
    JudgeTranscript,
    SessionScript,
    GtEvents,
}

impl SchemaId {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemaId::MemoryDelta => "memory_delta",
            SchemaId::ReconciliationResult => "reconciliation_result",
            SchemaId::JudgeEvent => "judge_event",
            SchemaId::JudgeTranscript => "judge_transcript",
            SchemaId::SessionScript => "session_script",
            SchemaId::GtEvents => "gt_events",
        }
    }
}

impl std::fmt::Display for SchemaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One structured-output request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub schema_id: SchemaId,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    /// Build a request with the stage defaults: temperature 0.0 for
    /// reproducibility and a per-schema output cap.
    pub fn new(schema_id: SchemaId, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        let max_output_tokens = match schema_id {
            SchemaId::MemoryDelta => 800,
            SchemaId::ReconciliationResult => 700,
            SchemaId::JudgeEvent => 400,
            SchemaId::JudgeTranscript => 500,
            SchemaId::SessionScript => 1200,
            SchemaId::GtEvents => 800,
        };
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            schema_id,
            temperature: 0.0,
            max_output_tokens,
        }
    }
}

/// Stable request identity: SHA-256 over the length-framed
/// (schema_id, system_text, user_text) triple. Identical requests collide;
/// differing requests do not.
pub fn fingerprint(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    for part in [
        request.schema_id.as_str(),
        &request.system_text,
        &request.user_text,
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Uniform interface over live and scripted completion backends. The
/// returned value has already passed local schema validation.
pub trait Gateway: Send + Sync {
    fn complete_structured(&self, request: &ChatRequest) -> Result<Value>;
}

impl<G: Gateway + ?Sized> Gateway for std::sync::Arc<G> {
    fn complete_structured(&self, request: &ChatRequest) -> Result<Value> {
        (**self).complete_structured(request)
    }
}
