//! Local response validation, one parser per schema id.
//!
//! Validation is the contract regardless of transport: the live gateway
//! also requests the provider's JSON-schema response format, but a
//! response only leaves the gateway after passing these checks.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::SchemaId;
use crate::memory::{MemoryDelete, MemoryInsert, MemoryUpdate};
use crate::recon::ReconciliationOutput;
use crate::transcript::Speaker;

/// Strict wire shape of a memory delta: all three operation lists must be
/// present (the domain type defaults them for file-format convenience).
#[derive(Debug, Deserialize)]
struct WireDelta {
    #[allow(dead_code)]
    inserts: Vec<MemoryInsert>,
    #[allow(dead_code)]
    updates: Vec<MemoryUpdate>,
    #[allow(dead_code)]
    deletes: Vec<MemoryDelete>,
}

/// Ground-truth event judgment verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "MATCH")]
    Match,
    #[serde(rename = "PARTIAL")]
    Partial,
    #[serde(rename = "NO_MATCH")]
    NoMatch,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Match => "MATCH",
            Verdict::Partial => "PARTIAL",
            Verdict::NoMatch => "NO_MATCH",
        }
    }
}

/// Wire shape of an event-judge response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventJudgment {
    pub verdict: Verdict,
    #[serde(default)]
    pub content_fidelity: Option<u8>,
    #[serde(default)]
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDimension {
    pub score: u8,
    #[serde(default)]
    pub reasoning: String,
}

/// Wire shape of a transcript-judge response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptJudgment {
    pub faithfulness: ScoredDimension,
    pub deduplication: ScoredDimension,
    #[serde(default)]
    pub overall_notes: String,
}

/// Wire shape of a generated scenario dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub turns: Vec<ScriptTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTurn {
    pub speaker: Speaker,
    pub text: String,
}

/// Wire shape of a ground-truth extraction response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEventsOutput {
    pub events: Vec<GtEventItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEventItem {
    pub turn_index: usize,
    pub utterance: String,
    pub memory_content: String,
}

/// Check `value` against `schema`. Returns a human-readable description of
/// the first violation, naming the offending field where possible.
pub fn validate(schema: SchemaId, value: &Value) -> Result<(), String> {
    match schema {
        SchemaId::MemoryDelta => {
            serde_json::from_value::<WireDelta>(value.clone()).map_err(|e| e.to_string())?;
        }
        SchemaId::ReconciliationResult => {
            let out: ReconciliationOutput =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&out.confidence) {
                return Err(format!(
                    "confidence {} outside [0, 1]",
                    out.confidence
                ));
            }
            for (i, r) in out.fhir_resources_considered.iter().enumerate() {
                if r.resource_type.is_empty() || r.code_system.is_empty() || r.code_value.is_empty()
                {
                    return Err(format!(
                        "fhir_resources_considered[{i}] has an empty identity field"
                    ));
                }
            }
        }
        SchemaId::JudgeEvent => {
            let j: EventJudgment =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            if let Some(f) = j.content_fidelity {
                if !(1..=5).contains(&f) {
                    return Err(format!("content_fidelity {f} outside 1-5"));
                }
            }
        }
        SchemaId::JudgeTranscript => {
            let j: TranscriptJudgment =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            for (name, dim) in [("faithfulness", &j.faithfulness), ("deduplication", &j.deduplication)] {
                if !(1..=5).contains(&dim.score) {
                    return Err(format!("{name}.score {} outside 1-5", dim.score));
                }
            }
        }
        SchemaId::SessionScript => {
            let s: SessionScript =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            if s.turns.is_empty() {
                return Err("turns is empty".into());
            }
            for (i, t) in s.turns.iter().enumerate() {
                if t.text.trim().is_empty() {
                    return Err(format!("turns[{i}].text is empty"));
                }
            }
        }
        SchemaId::GtEvents => {
            let g: GtEventsOutput =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            for (i, e) in g.events.iter().enumerate() {
                if e.memory_content.trim().is_empty() {
                    return Err(format!("events[{i}].memory_content is empty"));
                }
            }
        }
    }
    Ok(())
}

/// JSON Schema sent to providers that support a schema-constrained
/// response format. Local validation still applies on top.
pub fn json_schema(schema: SchemaId) -> Value {
    use serde_json::json;
    let string = json!({"type": "string"});
    match schema {
        SchemaId::MemoryDelta => json!({
            "type": "object",
            "properties": {
                "inserts": {"type": "array", "items": {"type": "object", "properties": {
                    "content": string, "category": {"enum": ["preference","health","lifestyle","medication","fact"]}},
                    "required": ["content", "category"]}},
                "updates": {"type": "array", "items": {"type": "object", "properties": {
                    "memory_id": string, "new_content": string,
                    "category": {"enum": ["preference","health","lifestyle","medication","fact"]}},
                    "required": ["memory_id", "new_content", "category"]}},
                "deletes": {"type": "array", "items": {"type": "object", "properties": {
                    "memory_id": string, "justification": string},
                    "required": ["memory_id"]}}
            },
            "required": ["inserts", "updates", "deletes"]
        }),
        SchemaId::ReconciliationResult => json!({
            "type": "object",
            "properties": {
                "contradiction_type": {"enum": ["agreement","contradiction","gap_patient","no_fhir"]},
                "confidence": {"type": "number", "minimum": 0.0, "maximum": 1.0},
                "justification": string,
                "clinical_severity": {"enum": ["low","medium","high"]},
                "fhir_resources_considered": {"type": "array", "items": {"type": "object", "properties": {
                    "resource_type": string, "code_system": string, "code_value": string, "display": string},
                    "required": ["resource_type", "code_system", "code_value", "display"]}}
            },
            "required": ["contradiction_type", "confidence", "justification", "clinical_severity", "fhir_resources_considered"]
        }),
        SchemaId::JudgeEvent => json!({
            "type": "object",
            "properties": {
                "verdict": {"enum": ["MATCH", "PARTIAL", "NO_MATCH"]},
                "content_fidelity": {"type": ["integer", "null"], "minimum": 1, "maximum": 5},
                "reasoning": string
            },
            "required": ["verdict", "reasoning"]
        }),
        SchemaId::JudgeTranscript => json!({
            "type": "object",
            "properties": {
                "faithfulness": {"type": "object", "properties": {"score": {"type": "integer", "minimum": 1, "maximum": 5}, "reasoning": string}, "required": ["score"]},
                "deduplication": {"type": "object", "properties": {"score": {"type": "integer", "minimum": 1, "maximum": 5}, "reasoning": string}, "required": ["score"]},
                "overall_notes": string
            },
            "required": ["faithfulness", "deduplication"]
        }),
        SchemaId::SessionScript => json!({
            "type": "object",
            "properties": {
                "turns": {"type": "array", "items": {"type": "object", "properties": {
                    "speaker": {"enum": ["patient", "coach"]}, "text": string},
                    "required": ["speaker", "text"]}}
            },
            "required": ["turns"]
        }),
        SchemaId::GtEvents => json!({
            "type": "object",
            "properties": {
                "events": {"type": "array", "items": {"type": "object", "properties": {
                    "turn_index": {"type": "integer", "minimum": 0}, "utterance": string, "memory_content": string},
                    "required": ["turn_index", "utterance", "memory_content"]}}
            },
            "required": ["events"]
        }),
    }
}
