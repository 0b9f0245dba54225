//! Reconciliation engine: classify patient-reported memories against the
//! curated clinical record.
//!
//! Every changed memory is classified into one of four states
//! (agreement, contradiction, patient-reported gap, no clinical
//! relevance) with a severity grade, a confidence score, a justification,
//! and citations to the specific FHIR resources involved. "Detected"
//! is derived, never stored: a result counts as a detection exactly when
//! it is a contradiction or a gap.
//!
//! The engine operates on extracted memories rather than raw conversation
//! text; callers hand it the changed set from a turn's apply report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::fhir::FhirResourceRef;
use crate::fhir::{ClinicalStream, CuratedSummary};
use crate::gateway::{ChatRequest, Gateway, SchemaId};
use crate::memory::MemoryRecord;
use crate::prompts;

/// The four-state classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContradictionType {
    Agreement,
    Contradiction,
    GapPatient,
    NoFhir,
}

impl ContradictionType {
    pub const ALL: [ContradictionType; 4] = [
        ContradictionType::Agreement,
        ContradictionType::Contradiction,
        ContradictionType::GapPatient,
        ContradictionType::NoFhir,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ContradictionType::Agreement => "agreement",
            ContradictionType::Contradiction => "contradiction",
            ContradictionType::GapPatient => "gap_patient",
            ContradictionType::NoFhir => "no_fhir",
        }
    }

    /// The detection flag d: contradictions and patient-reported gaps are
    /// clinically actionable discrepancies.
    pub fn detected(&self) -> bool {
        matches!(
            self,
            ContradictionType::Contradiction | ContradictionType::GapPatient
        )
    }
}

impl std::fmt::Display for ContradictionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordinal clinical severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Low, Severity::Medium, Severity::High];

    pub fn rank(&self) -> u8 {
        match self {
            Severity::Low => 0,
            Severity::Medium => 1,
            Severity::High => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
        }
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The engine's wire output shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationOutput {
    pub contradiction_type: ContradictionType,
    pub confidence: f64,
    pub justification: String,
    pub clinical_severity: Severity,
    #[serde(default)]
    pub fhir_resources_considered: Vec<FhirResourceRef>,
}

/// A persisted reconciliation result with its coordinates. Citations that
/// resolved against the patient's clinical stream stay in
/// `fhir_resources_considered`; the rest are quarantined in
/// `cited_unknown` without invalidating the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationResult {
    pub memory_id: String,
    pub session_id: String,
    pub contradiction_type: ContradictionType,
    pub confidence: f64,
    pub clinical_severity: Severity,
    pub justification: String,
    pub fhir_resources_considered: Vec<FhirResourceRef>,
    #[serde(default)]
    pub cited_unknown: Vec<FhirResourceRef>,
}

impl ReconciliationResult {
    pub fn detected(&self) -> bool {
        self.contradiction_type.detected()
    }

    /// All citations the engine produced, resolvable or not.
    pub fn all_cited(&self) -> impl Iterator<Item = &FhirResourceRef> {
        self.fhir_resources_considered
            .iter()
            .chain(self.cited_unknown.iter())
    }
}

/// Render the reconciliation prompt for one memory against a curated
/// summary.
pub fn build_recon_prompt(memory: &MemoryRecord, summary: &CuratedSummary) -> Result<ChatRequest> {
    if summary.text.trim().is_empty() {
        return Err(Error::Data(format!(
            "cannot reconcile {}: curated summary is empty",
            memory.memory_id
        )));
    }
    let user = prompts::fill(
        prompts::RECONCILIATION_TEMPLATE,
        &[
            ("content", memory.content.as_str()),
            ("category", memory.category.as_str()),
            ("clinical_summary", summary.text.as_str()),
        ],
    );
    Ok(ChatRequest::new(SchemaId::ReconciliationResult, "", user))
}

/// Classify one memory against the clinical stream.
pub fn reconcile(
    gateway: &dyn Gateway,
    memory: &MemoryRecord,
    stream: &ClinicalStream,
    summary: &CuratedSummary,
    session_id: &str,
) -> Result<ReconciliationResult> {
    let attach = |source: Error| Error::Memory {
        memory_id: memory.memory_id.clone(),
        source: Box::new(source),
    };
    let request = build_recon_prompt(memory, summary).map_err(attach)?;
    let value = gateway.complete_structured(&request).map_err(attach)?;
    let output: ReconciliationOutput = serde_json::from_value(value).map_err(|e| Error::Memory {
        memory_id: memory.memory_id.clone(),
        source: Box::new(e.into()),
    })?;

    let (resolved, unknown): (Vec<_>, Vec<_>) = output
        .fhir_resources_considered
        .into_iter()
        .partition(|r| stream.lookup(r).is_some());

    Ok(ReconciliationResult {
        memory_id: memory.memory_id.clone(),
        session_id: session_id.to_owned(),
        contradiction_type: output.contradiction_type,
        confidence: output.confidence,
        clinical_severity: output.clinical_severity,
        justification: output.justification,
        fhir_resources_considered: resolved,
        cited_unknown: unknown,
    })
}

/// Outcome of reconciling a turn's changed set: one result per memory in
/// input order, with per-memory failures recorded instead of aborting the
/// batch.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub results: Vec<ReconciliationResult>,
    pub failures: Vec<Error>,
}

/// Reconcile every changed memory of a turn. Memories are independent
/// given the clinical stream, so per-memory failures do not stop the rest.
pub fn reconcile_batch(
    gateway: &dyn Gateway,
    memories: &[MemoryRecord],
    stream: &ClinicalStream,
    summary: &CuratedSummary,
    session_id: &str,
) -> BatchOutcome {
    let mut outcome = BatchOutcome::default();
    for memory in memories {
        match reconcile(gateway, memory, stream, summary, session_id) {
            Ok(result) => outcome.results.push(result),
            Err(e) => outcome.failures.push(e),
        }
    }
    outcome
}

/// The memory record a ground-truth event stands for when it is fed
/// straight into reconciliation (the isolated pass). Ground-truth
/// annotations carry no category; clinical scenario content reconciles
/// under `health`.
pub fn gt_memory_record(
    event: &crate::transcript::GroundTruthEvent,
    session: &crate::transcript::Session,
) -> MemoryRecord {
    MemoryRecord {
        memory_id: event.event_id.clone(),
        content: event.memory_content.clone(),
        category: crate::memory::Category::Health,
        created_at: session.session_date,
        updated_at: session.session_date,
        source_session: session.session_id.clone(),
    }
}

/// Isolated pass: reconcile every ground-truth memory of the transcript's
/// synthetic sessions, one result per memory, in session order.
pub fn reconcile_gt_memories(
    gateway: &dyn Gateway,
    transcript: &crate::transcript::HybridTranscript,
    stream: &ClinicalStream,
    summary: &CuratedSummary,
) -> Result<Vec<ReconciliationResult>> {
    let mut results = Vec::new();
    for session in &transcript.sessions {
        if session.kind != crate::transcript::SessionKind::Synthetic {
            continue;
        }
        for event in &session.gt_events {
            let record = gt_memory_record(event, session);
            results.push(reconcile(
                gateway,
                &record,
                stream,
                summary,
                &session.session_id,
            )?);
        }
    }
    Ok(results)
}

/// Coupled pass: reconcile the exact memories the extraction replay
/// changed, turn by turn, against the clinical stream.
pub fn reconcile_trace(
    gateway: &dyn Gateway,
    trace: &crate::extraction::ReplayTrace,
    stream: &ClinicalStream,
    summary: &CuratedSummary,
) -> Result<Vec<ReconciliationResult>> {
    let mut results = Vec::new();
    for entry in &trace.entries {
        for memory in &entry.report.changed {
            results.push(reconcile(
                gateway,
                memory,
                stream,
                summary,
                &entry.session_id,
            )?);
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhir::{parse_bundle, TokenBudget};
    use crate::memory::Category;
    use chrono::NaiveDate;

    fn sample_patient_summary() -> (ClinicalStream, CuratedSummary) {
        let doc = include_str!("../fixtures/sample_patient_bundle.json");
        let parsed = parse_bundle(doc).unwrap();
        let summary = crate::fhir::curate(&parsed.stream, TokenBudget::default());
        (parsed.stream, summary)
    }

    fn memory(content: &str) -> MemoryRecord {
        MemoryRecord {
            memory_id: "mem_001".into(),
            content: content.into(),
            category: Category::Health,
            created_at: NaiveDate::from_ymd_opt(2019, 8, 21).unwrap(),
            updated_at: NaiveDate::from_ymd_opt(2019, 8, 21).unwrap(),
            source_session: "s1".into(),
        }
    }

    #[test]
    fn prompt_contains_memory_and_summary_tags() {
        let (_, summary) = sample_patient_summary();
        let m = memory(
            "Patient reports a recurring sinus issue is acting up, has a doctor's appointment for it tomorrow, and expects to be prescribed Amoxicillin, noting they have no allergies.",
        );
        let request = build_recon_prompt(&m, &summary).unwrap();
        assert_eq!(request.schema_id, SchemaId::ReconciliationResult);
        assert!(request.user_text.contains("recurring sinus issue"));
        assert!(request.user_text.contains("[RxNorm:308182]"));
        assert!(request.user_text.contains("Category: health"));
    }

    #[test]
    fn empty_summary_is_a_precondition_violation() {
        let summary = CuratedSummary {
            text: String::new(),
            included: vec![],
            estimated_tokens: 0,
            under_floor: true,
            over_ceiling: false,
        };
        assert!(build_recon_prompt(&memory("x"), &summary).is_err());
    }

    #[test]
    fn medication_discontinuation_flags_a_high_severity_contradiction() {
        let (stream, summary) = sample_patient_summary();
        let m = memory(
            "Patient stopped taking lisinopril a few days ago due to dizziness (reported Aug 21, 2019)",
        );
        let request = build_recon_prompt(&m, &summary).unwrap();
        let mut gateway = crate::gateway::ScriptedGateway::new(crate::gateway::FallbackMode::Error);
        gateway.script(
            &request,
            serde_json::json!({
                "contradiction_type": "contradiction",
                "confidence": 0.9,
                "clinical_severity": "high",
                "justification": "The record shows an active lisinopril prescription; the patient reports self-discontinuation.",
                "fhir_resources_considered": [{
                    "resource_type": "MedicationRequest",
                    "code_system": "RxNorm",
                    "code_value": "314076",
                    "display": "lisinopril 10 MG Oral Tablet (active)"
                }]
            }),
        );
        let result = reconcile(&gateway, &m, &stream, &summary, "s1").unwrap();
        assert_eq!(result.contradiction_type, ContradictionType::Contradiction);
        assert_eq!(result.clinical_severity, Severity::High);
        assert!(result.detected());
        assert_eq!(
            result.fhir_resources_considered[0].identity(),
            ("MedicationRequest", "RxNorm", "314076")
        );
        assert!(result.cited_unknown.is_empty());
    }

    #[test]
    fn routine_coaching_content_is_no_fhir_and_undetected() {
        let (stream, summary) = sample_patient_summary();
        let m = memory("Patient's goal is to walk 5,000 steps on Mon/Wed/Thu.");
        let request = build_recon_prompt(&m, &summary).unwrap();
        let mut gateway = crate::gateway::ScriptedGateway::new(crate::gateway::FallbackMode::Error);
        gateway.script(
            &request,
            serde_json::json!({
                "contradiction_type": "no_fhir",
                "confidence": 0.95,
                "clinical_severity": "low",
                "justification": "Routine step-goal content with no clinical bearing.",
                "fhir_resources_considered": []
            }),
        );
        let result = reconcile(&gateway, &m, &stream, &summary, "s1").unwrap();
        assert_eq!(result.contradiction_type, ContradictionType::NoFhir);
        assert!(!result.detected());
    }

    #[test]
    fn unresolvable_citations_are_quarantined_not_fatal() {
        let (stream, summary) = sample_patient_summary();
        let m = memory("Patient mentions an old wrist fracture treated elsewhere.");
        let request = build_recon_prompt(&m, &summary).unwrap();
        let mut gateway = crate::gateway::ScriptedGateway::new(crate::gateway::FallbackMode::Error);
        gateway.script(
            &request,
            serde_json::json!({
                "contradiction_type": "gap_patient",
                "confidence": 0.7,
                "clinical_severity": "low",
                "justification": "Undocumented history.",
                "fhir_resources_considered": [
                    {"resource_type": "Condition", "code_system": "SNOMED-CT", "code_value": "40055000", "display": "Chronic sinusitis (disorder)"},
                    {"resource_type": "Condition", "code_system": "SNOMED-CT", "code_value": "123456789", "display": "Something not in the record"}
                ]
            }),
        );
        let result = reconcile(&gateway, &m, &stream, &summary, "s1").unwrap();
        assert_eq!(result.fhir_resources_considered.len(), 1);
        assert_eq!(result.cited_unknown.len(), 1);
        assert_eq!(result.cited_unknown[0].code_value, "123456789");
        assert!(result.detected());
    }

    #[test]
    fn batch_preserves_order_and_records_failures() {
        let (stream, summary) = sample_patient_summary();
        let memories: Vec<MemoryRecord> = (0..2)
            .map(|i| {
                let mut m = memory(&format!("memory number {i}"));
                m.memory_id = format!("mem_{:03}", i + 1);
                m
            })
            .collect();
        let mut gateway = crate::gateway::ScriptedGateway::new(crate::gateway::FallbackMode::Error);
        for m in &memories {
            let request = build_recon_prompt(m, &summary).unwrap();
            gateway.script(
                &request,
                serde_json::json!({
                    "contradiction_type": "no_fhir",
                    "confidence": 0.9,
                    "clinical_severity": "low",
                    "justification": "routine",
                    "fhir_resources_considered": []
                }),
            );
        }
        let outcome = reconcile_batch(&gateway, &memories, &stream, &summary, "s1");
        assert_eq!(outcome.results.len(), 2);
        assert!(outcome.failures.is_empty());
        assert_eq!(outcome.results[0].memory_id, "mem_001");
        assert_eq!(outcome.results[1].memory_id, "mem_002");

        // Empty changed set: empty batch.
        let empty = reconcile_batch(&gateway, &[], &stream, &summary, "s1");
        assert!(empty.results.is_empty());

        // A memory with no scripted response fails alone; the batch
        // continues.
        let mut extended = memories.clone();
        let mut stray = memory("memory with no canned answer");
        stray.memory_id = "mem_999".into();
        extended.push(stray);
        let outcome = reconcile_batch(&gateway, &extended, &stream, &summary, "s1");
        assert_eq!(outcome.results.len(), 2);
        assert_eq!(outcome.failures.len(), 1);
        assert!(outcome.failures[0].to_string().contains("mem_999"));
    }

    #[test]
    fn detection_flag_is_a_pure_function_of_classification() {
        assert!(!ContradictionType::Agreement.detected());
        assert!(ContradictionType::Contradiction.detected());
        assert!(ContradictionType::GapPatient.detected());
        assert!(!ContradictionType::NoFhir.detected());
    }

    #[test]
    fn severity_order_is_low_medium_high() {
        assert!(Severity::Low < Severity::Medium);
        assert!(Severity::Medium < Severity::High);
        assert_eq!(Severity::High.rank(), 2);
    }

    #[test]
    fn strict_enums_reject_unknown_values() {
        let bad = serde_json::json!({
            "contradiction_type": "maybe",
            "confidence": 0.5,
            "justification": "",
            "clinical_severity": "low"
        });
        assert!(serde_json::from_value::<ReconciliationOutput>(bad).is_err());
        let bad_sev = serde_json::json!({
            "contradiction_type": "agreement",
            "confidence": 0.5,
            "justification": "",
            "clinical_severity": "catastrophic"
        });
        assert!(serde_json::from_value::<ReconciliationOutput>(bad_sev).is_err());
    }
}
