//! Deterministic scripted gateway.
//!
//! Plays back canned responses keyed by `(schema_id, fingerprint)`.
//! Read-only and lock-free after construction; identical fixtures and
//! requests produce identical bytes on every run and platform.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gateway::audit::{AuditEntry, AuditLog};
use crate::gateway::{fingerprint, schemas, ChatRequest, Gateway, SchemaId};

/// What to do with a request that has no canned response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackMode {
    /// Fail with a fixture-miss error.
    #[default]
    Error,
    /// Answer memory-delta requests with an empty delta; all other
    /// schemas still fail.
    EmptyDelta,
}

/// One canned response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub schema_id: SchemaId,
    pub fingerprint: String,
    pub response: Value,
}

#[derive(Default)]
pub struct ScriptedGateway {
    responses: HashMap<(SchemaId, String), Value>,
    fallback: FallbackMode,
    audit: Option<Arc<AuditLog>>,
}

impl ScriptedGateway {
    pub fn new(fallback: FallbackMode) -> Self {
        Self {
            fallback,
            ..Default::default()
        }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn insert(&mut self, schema_id: SchemaId, fingerprint: String, response: Value) {
        self.responses.insert((schema_id, fingerprint), response);
    }

    /// Key a response to a concrete request.
    pub fn script(&mut self, request: &ChatRequest, response: Value) {
        self.insert(request.schema_id, fingerprint(request), response);
    }

    /// The canned response a request would get, if any.
    pub fn response_for(&self, request: &ChatRequest) -> Option<&Value> {
        self.responses
            .get(&(request.schema_id, fingerprint(request)))
    }

    pub fn from_entries(entries: Vec<FixtureEntry>, fallback: FallbackMode) -> Self {
        let mut gateway = Self::new(fallback);
        for e in entries {
            gateway.insert(e.schema_id, e.fingerprint, e.response);
        }
        gateway
    }

    /// Load a fixture file: JSONL of [`FixtureEntry`] lines, or an audit
    /// log (whose successful responses are replayed).
    pub fn load(path: &Path, fallback: FallbackMode) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut gateway = Self::new(fallback);
        for line in file.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(&line)?;
            if value.get("schema_id").is_some() {
                let entry: FixtureEntry = serde_json::from_value(value)?;
                gateway.insert(entry.schema_id, entry.fingerprint, entry.response);
            } else if value.get("request").is_some() {
                let entry: AuditEntry = serde_json::from_value(value)?;
                if let Some(response) = entry.response {
                    gateway.insert(entry.request.schema_id, entry.fingerprint, response);
                }
            } else {
                return Err(Error::Data(format!(
                    "unrecognized fixture line in {}",
                    path.display()
                )));
            }
        }
        Ok(gateway)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Deterministically ordered fixture entries, for writing to disk.
    pub fn entries(&self) -> Vec<FixtureEntry> {
        let mut entries: Vec<FixtureEntry> = self
            .responses
            .iter()
            .map(|((schema_id, fp), response)| FixtureEntry {
                schema_id: *schema_id,
                fingerprint: fp.clone(),
                response: response.clone(),
            })
            .collect();
        entries.sort_by(|a, b| {
            a.schema_id
                .cmp(&b.schema_id)
                .then_with(|| a.fingerprint.cmp(&b.fingerprint))
        });
        entries
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for entry in self.entries() {
            serde_json::to_writer(&mut file, &entry)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        Ok(())
    }

    fn empty_delta() -> Value {
        serde_json::json!({ "inserts": [], "updates": [], "deletes": [] })
    }
}

impl Gateway for ScriptedGateway {
    fn complete_structured(&self, request: &ChatRequest) -> Result<Value> {
        let fp = fingerprint(request);
        let outcome = match self.responses.get(&(request.schema_id, fp.clone())) {
            Some(response) => {
                match schemas::validate(request.schema_id, response) {
                    Ok(()) => Ok(response.clone()),
                    Err(detail) => Err(Error::SchemaViolation {
                        schema: request.schema_id,
                        detail,
                        raw: response.to_string(),
                    }),
                }
            }
            None if self.fallback == FallbackMode::EmptyDelta
                && request.schema_id == SchemaId::MemoryDelta =>
            {
                Ok(Self::empty_delta())
            }
            None => Err(Error::FixtureMiss {
                schema: request.schema_id,
                fingerprint: fp.clone(),
            }),
        };
        if let Some(audit) = &self.audit {
            audit.record(AuditEntry {
                fingerprint: fp,
                request: request.clone(),
                response: outcome.as_ref().ok().cloned(),
                error: outcome.as_ref().err().map(|e| e.to_string()),
                latency_ms: 0,
            });
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn delta_request(text: &str) -> ChatRequest {
        ChatRequest::new(SchemaId::MemoryDelta, "sys", text)
    }

    #[test]
    fn plays_back_the_exact_canned_response() {
        let request = delta_request("turn 1");
        let canned = json!({"inserts": [{"content": "Patient owns a treadmill", "category": "lifestyle"}], "updates": [], "deletes": []});
        let mut gateway = ScriptedGateway::new(FallbackMode::Error);
        gateway.script(&request, canned.clone());
        assert_eq!(gateway.complete_structured(&request).unwrap(), canned);
    }

    #[test]
    fn unmatched_request_errors_in_error_mode() {
        let gateway = ScriptedGateway::new(FallbackMode::Error);
        let err = gateway.complete_structured(&delta_request("nope")).unwrap_err();
        assert!(matches!(err, Error::FixtureMiss { .. }));
    }

    #[test]
    fn empty_delta_fallback_covers_only_delta_requests() {
        let gateway = ScriptedGateway::new(FallbackMode::EmptyDelta);
        let value = gateway.complete_structured(&delta_request("anything")).unwrap();
        assert_eq!(value, json!({"inserts": [], "updates": [], "deletes": []}));
        let recon = ChatRequest::new(SchemaId::ReconciliationResult, "", "anything");
        assert!(gateway.complete_structured(&recon).is_err());
    }

    #[test]
    fn canned_response_violating_schema_errors() {
        let request = ChatRequest::new(SchemaId::ReconciliationResult, "", "memory vs record");
        let mut gateway = ScriptedGateway::new(FallbackMode::Error);
        gateway.script(&request, json!({"confidence": 0.9}));
        let err = gateway.complete_structured(&request).unwrap_err();
        match err {
            Error::SchemaViolation { detail, .. } => {
                assert!(detail.contains("contradiction_type"))
            }
            other => panic!("expected schema violation, got {other}"),
        }
    }

    #[test]
    fn sample_reconciliation_output_plays_back_and_parses() {
        let canned: Value =
            serde_json::from_str(include_str!("../../fixtures/sample_recon_output.json")).unwrap();
        let request = ChatRequest::new(
            SchemaId::ReconciliationResult,
            "",
            "sinus issue memory vs clinical summary",
        );
        let mut gateway = ScriptedGateway::new(FallbackMode::Error);
        gateway.script(&request, canned);
        let value = gateway.complete_structured(&request).unwrap();
        let output: crate::recon::ReconciliationOutput = serde_json::from_value(value).unwrap();
        assert_eq!(output.confidence, 0.95);
        assert_eq!(output.fhir_resources_considered.len(), 2);
    }

    #[test]
    fn playback_is_deterministic_across_instances() {
        let request = delta_request("turn 7");
        let canned = json!({"inserts": [], "updates": [], "deletes": []});
        let mut a = ScriptedGateway::new(FallbackMode::Error);
        a.script(&request, canned.clone());
        let b = ScriptedGateway::from_entries(a.entries(), FallbackMode::Error);
        let ra = a.complete_structured(&request).unwrap();
        let rb = b.complete_structured(&request).unwrap();
        assert_eq!(
            serde_json::to_string(&ra).unwrap(),
            serde_json::to_string(&rb).unwrap()
        );
    }
}
