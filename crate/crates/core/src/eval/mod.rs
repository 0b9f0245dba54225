//! Three-dimension evaluation: extraction quality, isolated
//! reconciliation, and the coupled pipeline with error-cascade
//! accounting.
//!
//! Dimension 1 judges whether each ground-truth memory event is captured
//! in the memory state right after its utterance. Dimension 2 feeds
//! ground-truth memories straight into reconciliation and scores the
//! designed scenarios. Dimension 3 repeats the scoring over the memories
//! the pipeline actually extracted, so the dimension-2/3 gap is the error
//! cascade attributable to extraction.

pub mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::ReplayTrace;
use crate::gateway::schemas::{EventJudgment, TranscriptJudgment};
pub use crate::gateway::schemas::Verdict;
use crate::gateway::{ChatRequest, Gateway, SchemaId};
use crate::memory::{clean_view_of, MemoryRecord};
use crate::prompts;
use crate::recon::{ContradictionType, ReconciliationResult, Severity};
use crate::dataset::Scenario;
use crate::transcript::{HybridTranscript, GroundTruthEvent, SessionKind};
pub use stats::{bootstrap_grouped_ci, bootstrap_mean_ci, pearson, BootstrapCi, Pearson};

/// A judged ground-truth event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub event_id: String,
    pub verdict: Verdict,
    pub content_fidelity: Option<u8>,
    pub reasoning: String,
}

/// Memory-state listing as the event judge sees it.
fn render_memories(memories: &[MemoryRecord]) -> String {
    if memories.is_empty() {
        return "(no memories)".to_owned();
    }
    memories
        .iter()
        .map(|m| format!("- [{}] {}", m.category, m.content))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Build the event-judge request against the memory state after the
/// event's utterance.
pub fn build_judge_event_prompt(event: &GroundTruthEvent, memories: &[MemoryRecord]) -> ChatRequest {
    let listing = render_memories(memories);
    let user = prompts::fill(
        prompts::JUDGE_EVENT_TEMPLATE,
        &[
            ("utterance", event.utterance.as_str()),
            ("memory_content", event.memory_content.as_str()),
            ("memories", listing.as_str()),
        ],
    );
    ChatRequest::new(SchemaId::JudgeEvent, "", user)
}

/// Judge one ground-truth event against a memory snapshot.
pub fn judge_event(
    gateway: &dyn Gateway,
    event: &GroundTruthEvent,
    memories: &[MemoryRecord],
) -> Result<JudgeVerdict> {
    let request = build_judge_event_prompt(event, memories);
    let value = gateway.complete_structured(&request).map_err(|e| {
        Error::Data(format!("judging {} failed: {e}", event.event_id))
    })?;
    let judgment: EventJudgment = serde_json::from_value(value)?;
    Ok(JudgeVerdict {
        event_id: event.event_id.clone(),
        verdict: judgment.verdict,
        content_fidelity: judgment.content_fidelity,
        reasoning: judgment.reasoning,
    })
}

/// Recall pair over a verdict set: (match + partial) / total and
/// match / total.
pub fn dim1_recall(verdicts: &[JudgeVerdict]) -> Result<(f64, f64)> {
    if verdicts.is_empty() {
        return Err(Error::Stats("no verdicts to score".into()));
    }
    let n = verdicts.len() as f64;
    let matches = verdicts.iter().filter(|v| v.verdict == Verdict::Match).count() as f64;
    let partials = verdicts
        .iter()
        .filter(|v| v.verdict == Verdict::Partial)
        .count() as f64;
    Ok(((matches + partials) / n, matches / n))
}

/// Transcript-level quality scores, both 1-5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranscriptScores {
    pub faithfulness: u8,
    pub deduplication: u8,
}

pub fn build_judge_transcript_prompt(transcript_text: &str, memories_view: &str) -> ChatRequest {
    let memories = if memories_view.is_empty() {
        "(no memories)"
    } else {
        memories_view
    };
    let user = prompts::fill(
        prompts::JUDGE_TRANSCRIPT_TEMPLATE,
        &[("transcript", transcript_text), ("memories", memories)],
    );
    ChatRequest::new(SchemaId::JudgeTranscript, "", user)
}

/// Judge the final memory state against the complete conversation.
pub fn judge_transcript(
    gateway: &dyn Gateway,
    transcript: &HybridTranscript,
    final_records: &[MemoryRecord],
) -> Result<TranscriptScores> {
    let request =
        build_judge_transcript_prompt(&transcript.render_full(), &clean_view_of(final_records));
    let value = gateway.complete_structured(&request)?;
    let judgment: TranscriptJudgment = serde_json::from_value(value)?;
    Ok(TranscriptScores {
        faithfulness: judgment.faithfulness.score,
        deduplication: judgment.deduplication.score,
    })
}

/// Scenario-level outcome of one reconciliation pass. Reference sets use
/// exact `(resource_type, code_system, code_value)` identity keys;
/// display text never participates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario_id: String,
    pub detected: bool,
    pub resource_informed: bool,
    pub predicted_severity: Option<Severity>,
    /// Classification of the first detected result, when any.
    pub primary_classification: Option<ContradictionType>,
    pub matched_refs: BTreeSet<String>,
    pub predicted_refs: BTreeSet<String>,
    pub expected_refs: BTreeSet<String>,
}

/// Score one scenario from the reconciliation results of its session.
pub fn score_scenario(
    scenario: &Scenario,
    session_results: &[ReconciliationResult],
) -> ScenarioOutcome {
    let detected_results: Vec<&ReconciliationResult> = session_results
        .iter()
        .filter(|r| r.detected())
        .collect();
    let detected = !detected_results.is_empty();
    let predicted_refs: BTreeSet<String> = detected_results
        .iter()
        .flat_map(|r| r.all_cited().map(|c| c.identity_key()))
        .collect();
    let expected_refs: BTreeSet<String> = scenario
        .expected_refs
        .iter()
        .map(|r| r.identity_key())
        .collect();
    let matched_refs: BTreeSet<String> = predicted_refs
        .intersection(&expected_refs)
        .cloned()
        .collect();
    ScenarioOutcome {
        scenario_id: scenario.scenario_id.clone(),
        detected,
        resource_informed: detected && !matched_refs.is_empty(),
        predicted_severity: detected_results.iter().map(|r| r.clinical_severity).max(),
        primary_classification: detected_results.first().map(|r| r.contradiction_type),
        matched_refs,
        predicted_refs,
        expected_refs,
    }
}

/// Detection table row for one FHIR resource type. A scenario contributes
/// to every type among its expected references, so rows can sum past the
/// scenario total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTypeRow {
    pub resource_type: String,
    pub scenarios: usize,
    pub detection_rate: f64,
}

/// The metric bundle of one reconciliation dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimReport {
    pub scenario_count: usize,
    pub detected_count: usize,
    pub detection: f64,
    pub resource_informed: f64,
    /// Detection over the safety-critical subset; absent when the corpus
    /// has none.
    pub safety_recall: Option<f64>,
    pub severity_exact: f64,
    pub severity_within1: f64,
    pub resource_recall_mean: f64,
    /// Mean precision over scenarios that predicted at least one
    /// reference; absent when none did.
    pub resource_precision_mean: Option<f64>,
    pub detection_by_severity: BTreeMap<Severity, f64>,
    pub per_type: Vec<PerTypeRow>,
    /// Classification counts over detected scenarios.
    pub classification: BTreeMap<ContradictionType, usize>,
}

/// Aggregate scenario outcomes into a dimension report.
///
/// Severity accuracy counts undetected scenarios as non-matching.
/// Undetected scenarios score zero resource recall; precision is
/// undefined for scenarios with no predicted references and those are
/// excluded from its mean.
pub fn dim_metrics(scenarios: &[Scenario], outcomes: &[ScenarioOutcome]) -> Result<DimReport> {
    let by_id: BTreeMap<&str, &ScenarioOutcome> = outcomes
        .iter()
        .map(|o| (o.scenario_id.as_str(), o))
        .collect();
    if by_id.len() != scenarios.len()
        || scenarios
            .iter()
            .any(|s| !by_id.contains_key(s.scenario_id.as_str()))
    {
        return Err(Error::Data(
            "outcomes do not cover the scenario set exactly".into(),
        ));
    }

    let n = scenarios.len();
    if n == 0 {
        return Err(Error::Stats("no scenarios to aggregate".into()));
    }

    let mut detected_count = 0usize;
    let mut resource_informed = 0usize;
    let mut severity_exact = 0usize;
    let mut severity_within1 = 0usize;
    let mut recall_sum = 0.0;
    let mut precisions = Vec::new();
    let mut safety_total = 0usize;
    let mut safety_detected = 0usize;
    let mut by_severity: BTreeMap<Severity, (usize, usize)> = BTreeMap::new();
    let mut per_type: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut classification: BTreeMap<ContradictionType, usize> = BTreeMap::new();

    for scenario in scenarios {
        let outcome = by_id[scenario.scenario_id.as_str()];
        if outcome.detected {
            detected_count += 1;
            if let Some(c) = outcome.primary_classification {
                *classification.entry(c).or_insert(0) += 1;
            }
        }
        if outcome.resource_informed {
            resource_informed += 1;
        }
        if scenario.safety_critical {
            safety_total += 1;
            if outcome.detected {
                safety_detected += 1;
            }
        }
        if let Some(predicted) = outcome.predicted_severity {
            let distance = predicted.rank().abs_diff(scenario.severity_gt.rank());
            if distance == 0 {
                severity_exact += 1;
            }
            if distance <= 1 {
                severity_within1 += 1;
            }
        }
        recall_sum += outcome.matched_refs.len() as f64 / outcome.expected_refs.len() as f64;
        if !outcome.predicted_refs.is_empty() {
            precisions.push(outcome.matched_refs.len() as f64 / outcome.predicted_refs.len() as f64);
        }
        let severity_slot = by_severity.entry(scenario.severity_gt).or_insert((0, 0));
        severity_slot.0 += 1;
        if outcome.detected {
            severity_slot.1 += 1;
        }
        let types: BTreeSet<&str> = scenario
            .expected_refs
            .iter()
            .map(|r| r.resource_type.as_str())
            .collect();
        for t in types {
            let slot = per_type.entry(t).or_insert((0, 0));
            slot.0 += 1;
            if outcome.detected {
                slot.1 += 1;
            }
        }
    }

    Ok(DimReport {
        scenario_count: n,
        detected_count,
        detection: detected_count as f64 / n as f64,
        resource_informed: resource_informed as f64 / n as f64,
        safety_recall: (safety_total > 0).then(|| safety_detected as f64 / safety_total as f64),
        severity_exact: severity_exact as f64 / n as f64,
        severity_within1: severity_within1 as f64 / n as f64,
        resource_recall_mean: recall_sum / n as f64,
        resource_precision_mean: (!precisions.is_empty())
            .then(|| precisions.iter().sum::<f64>() / precisions.len() as f64),
        detection_by_severity: by_severity
            .into_iter()
            .map(|(sev, (total, hit))| (sev, hit as f64 / total as f64))
            .collect(),
        per_type: per_type
            .into_iter()
            .map(|(t, (total, hit))| PerTypeRow {
                resource_type: t.to_owned(),
                scenarios: total,
                detection_rate: hit as f64 / total as f64,
            })
            .collect(),
        classification,
    })
}

/// Bootstrap resampling unit for the cascade interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapUnit {
    #[default]
    Scenario,
    Patient,
}

#[derive(Debug, Clone)]
pub struct CascadeOptions {
    pub iterations: usize,
    pub seed: u64,
    pub unit: BootstrapUnit,
    /// scenario_id -> patient_id, required for patient-level resampling.
    pub patient_of: BTreeMap<String, String>,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            seed: 7,
            unit: BootstrapUnit::Scenario,
            patient_of: BTreeMap::new(),
        }
    }
}

/// Error-cascade accounting between the isolated and coupled passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub scenario_count: usize,
    pub dim2_detected: usize,
    pub dim3_detected: usize,
    /// dim3 detection - dim2 detection; negative is a loss.
    pub delta: f64,
    /// Detected in isolation, missed by the pipeline.
    pub lost: Vec<String>,
    /// Missed in isolation, detected by the pipeline.
    pub gained: Vec<String>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub iterations: usize,
    pub seed: u64,
    pub unit: BootstrapUnit,
}

/// Compare the two dimensions scenario by scenario and bootstrap the
/// paired detection difference.
pub fn cascade(
    dim2: &[ScenarioOutcome],
    dim3: &[ScenarioOutcome],
    options: &CascadeOptions,
) -> Result<CascadeReport> {
    let map2: BTreeMap<&str, &ScenarioOutcome> =
        dim2.iter().map(|o| (o.scenario_id.as_str(), o)).collect();
    let map3: BTreeMap<&str, &ScenarioOutcome> =
        dim3.iter().map(|o| (o.scenario_id.as_str(), o)).collect();
    if map2.len() != dim2.len() || map3.len() != dim3.len() {
        return Err(Error::Data("duplicate scenario ids in outcomes".into()));
    }
    if map2.keys().ne(map3.keys()) {
        return Err(Error::Data(
            "cascade requires identical scenario id sets in both dimensions".into(),
        ));
    }
    if map2.is_empty() {
        return Err(Error::Stats("cascade over an empty scenario set".into()));
    }

    let mut lost = Vec::new();
    let mut gained = Vec::new();
    let mut diffs = Vec::with_capacity(map2.len());
    for (id, o2) in &map2 {
        let o3 = map3[id];
        diffs.push(f64::from(o3.detected) - f64::from(o2.detected));
        match (o2.detected, o3.detected) {
            (true, false) => lost.push((*id).to_owned()),
            (false, true) => gained.push((*id).to_owned()),
            _ => {}
        }
    }
    let dim2_detected = map2.values().filter(|o| o.detected).count();
    let dim3_detected = map3.values().filter(|o| o.detected).count();
    // The accounting identity is arithmetic; keep it as a hard check.
    assert_eq!(
        dim3_detected,
        dim2_detected - lost.len() + gained.len(),
        "cascade accounting identity violated"
    );

    let ci = match options.unit {
        BootstrapUnit::Scenario => {
            stats::bootstrap_mean_ci(&diffs, options.iterations, options.seed)?
        }
        BootstrapUnit::Patient => {
            let mut groups: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
            for (id, o2) in &map2 {
                let patient = options.patient_of.get(*id).ok_or_else(|| {
                    Error::Data(format!("no patient mapping for scenario {id}"))
                })?;
                let o3 = map3[id];
                let slot = groups.entry(patient.as_str()).or_insert((0.0, 0.0));
                slot.0 += f64::from(o3.detected) - f64::from(o2.detected);
                slot.1 += 1.0;
            }
            let groups: Vec<(f64, f64)> = groups.into_values().collect();
            stats::bootstrap_grouped_ci(&groups, options.iterations, options.seed)?
        }
    };

    Ok(CascadeReport {
        scenario_count: map2.len(),
        dim2_detected,
        dim3_detected,
        delta: (dim3_detected as f64 - dim2_detected as f64) / map2.len() as f64,
        lost,
        gained,
        ci_low: ci.low,
        ci_high: ci.high,
        iterations: options.iterations,
        seed: options.seed,
        unit: options.unit,
    })
}

/// Classification distribution over a result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub total: usize,
    pub counts: BTreeMap<ContradictionType, usize>,
}

impl Distribution {
    pub fn fraction(&self, classification: ContradictionType) -> f64 {
        *self.counts.get(&classification).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Nonzero fractions only; they sum to 1 up to rounding.
    pub fn fractions(&self) -> BTreeMap<ContradictionType, f64> {
        self.counts
            .iter()
            .map(|(c, n)| (*c, *n as f64 / self.total as f64))
            .collect()
    }
}

/// Distribution of classifications, used for the specificity analysis
/// over discrepancy-free real sessions.
pub fn specificity_distribution(results: &[ReconciliationResult]) -> Result<Distribution> {
    if results.is_empty() {
        return Err(Error::Stats(
            "specificity over an empty result set".into(),
        ));
    }
    let mut counts: BTreeMap<ContradictionType, usize> = BTreeMap::new();
    for r in results {
        *counts.entry(r.contradiction_type).or_insert(0) += 1;
    }
    Ok(Distribution {
        total: results.len(),
        counts,
    })
}

/// Per-patient extraction-quality slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientDim1 {
    pub patient_id: String,
    pub events: usize,
    pub recall: Option<f64>,
    pub strict_recall: Option<f64>,
    pub faithfulness: u8,
    pub deduplication: u8,
    pub patient_turns: usize,
    pub final_memories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim1Report {
    pub recall: f64,
    pub strict_recall: f64,
    pub faithfulness_mean: f64,
    pub deduplication_mean: f64,
    pub total_events: usize,
    pub patient_turns: usize,
    pub final_memories: usize,
    pub verdict_counts: BTreeMap<String, usize>,
    pub per_patient: Vec<PatientDim1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub recall_vs_turns: Option<Pearson>,
    pub detection_vs_turns: Option<Pearson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityReport {
    pub total_results: usize,
    pub fractions: BTreeMap<ContradictionType, f64>,
    pub contradiction_count: usize,
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dim1: Dim1Report,
    pub dim2: DimReport,
    pub dim3: DimReport,
    pub cascade: CascadeReport,
    pub correlations: Correlations,
    pub specificity: Option<SpecificityReport>,
}

/// Everything the evaluation needs, already loaded.
pub struct EvalInputs<'a> {
    pub transcripts: &'a [HybridTranscript],
    pub scenarios: &'a [Scenario],
    /// Replay traces by patient id.
    pub traces: &'a BTreeMap<String, ReplayTrace>,
    /// Isolated-pass results, tagged with their patient.
    pub dim2_results: &'a [(String, ReconciliationResult)],
    /// Pipeline-pass results, tagged with their patient.
    pub dim3_results: &'a [(String, ReconciliationResult)],
}

fn group_by_session(
    results: &[(String, ReconciliationResult)],
) -> BTreeMap<&str, Vec<&ReconciliationResult>> {
    let mut map: BTreeMap<&str, Vec<&ReconciliationResult>> = BTreeMap::new();
    for (_, r) in results {
        map.entry(r.session_id.as_str()).or_default().push(r);
    }
    map
}

fn outcomes_for(
    scenarios: &[Scenario],
    results: &[(String, ReconciliationResult)],
) -> Vec<ScenarioOutcome> {
    let by_session = group_by_session(results);
    scenarios
        .iter()
        .map(|s| {
            let session_results: Vec<ReconciliationResult> = by_session
                .get(s.session_id.as_str())
                .map(|rs| rs.iter().map(|r| (*r).clone()).collect())
                .unwrap_or_default();
            score_scenario(s, &session_results)
        })
        .collect()
}

/// Run the full three-dimension evaluation.
pub fn evaluate(
    judge_gateway: &dyn Gateway,
    inputs: &EvalInputs<'_>,
    cascade_options: &CascadeOptions,
) -> Result<EvalReport> {
    // Dimension 1: judge every ground-truth event against the memory
    // state after its utterance, then the final state per transcript.
    let mut all_verdicts: Vec<JudgeVerdict> = Vec::new();
    let mut per_patient = Vec::new();
    let mut recall_points = Vec::new();
    let mut total_turns = 0usize;
    let mut total_memories = 0usize;

    for transcript in inputs.transcripts {
        let trace = inputs.traces.get(&transcript.patient_id).ok_or_else(|| {
            Error::Data(format!("no replay trace for {}", transcript.patient_id))
        })?;
        let mut verdicts = Vec::new();
        for session in &transcript.sessions {
            for event in &session.gt_events {
                let memories = trace
                    .state_for_turn(&event.session_id, event.turn_index)
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "trace of {} has no entry for {} turn {}",
                            transcript.patient_id, event.session_id, event.turn_index
                        ))
                    })?;
                verdicts.push(judge_event(judge_gateway, event, &memories)?);
            }
        }
        let scores = judge_transcript(judge_gateway, transcript, &trace.final_records)?;
        let patient_turns = transcript.patient_turn_count();
        total_turns += patient_turns;
        total_memories += trace.final_records.len();
        let recall_pair = dim1_recall(&verdicts).ok();
        if let Some((recall, _)) = recall_pair {
            recall_points.push((patient_turns as f64, recall));
        }
        per_patient.push(PatientDim1 {
            patient_id: transcript.patient_id.clone(),
            events: verdicts.len(),
            recall: recall_pair.map(|(r, _)| r),
            strict_recall: recall_pair.map(|(_, s)| s),
            faithfulness: scores.faithfulness,
            deduplication: scores.deduplication,
            patient_turns,
            final_memories: trace.final_records.len(),
        });
        all_verdicts.extend(verdicts);
    }

    let (recall, strict_recall) = dim1_recall(&all_verdicts)?;
    let patients = per_patient.len().max(1) as f64;
    let mut verdict_counts: BTreeMap<String, usize> = BTreeMap::new();
    for v in &all_verdicts {
        *verdict_counts
            .entry(v.verdict.as_str().to_owned())
            .or_insert(0) += 1;
    }
    let dim1 = Dim1Report {
        recall,
        strict_recall,
        faithfulness_mean: per_patient.iter().map(|p| f64::from(p.faithfulness)).sum::<f64>()
            / patients,
        deduplication_mean: per_patient
            .iter()
            .map(|p| f64::from(p.deduplication))
            .sum::<f64>()
            / patients,
        total_events: all_verdicts.len(),
        patient_turns: total_turns,
        final_memories: total_memories,
        verdict_counts,
        per_patient,
    };

    // Dimensions 2 and 3.
    let outcomes2 = outcomes_for(inputs.scenarios, inputs.dim2_results);
    let outcomes3 = outcomes_for(inputs.scenarios, inputs.dim3_results);
    let dim2 = dim_metrics(inputs.scenarios, &outcomes2)?;
    let dim3 = dim_metrics(inputs.scenarios, &outcomes3)?;

    let mut options = cascade_options.clone();
    if options.patient_of.is_empty() {
        options.patient_of = inputs
            .scenarios
            .iter()
            .map(|s| (s.scenario_id.clone(), s.patient_id.clone()))
            .collect();
    }
    let cascade_report = cascade(&outcomes2, &outcomes3, &options)?;

    // Specificity: pipeline results from real sessions only.
    let mut real_sessions: BTreeSet<&str> = BTreeSet::new();
    for t in inputs.transcripts {
        for s in &t.sessions {
            if s.kind == SessionKind::Real {
                real_sessions.insert(s.session_id.as_str());
            }
        }
    }
    let real_results: Vec<ReconciliationResult> = inputs
        .dim3_results
        .iter()
        .filter(|(_, r)| real_sessions.contains(r.session_id.as_str()))
        .map(|(_, r)| r.clone())
        .collect();
    let specificity = if real_results.is_empty() {
        None
    } else {
        let d = specificity_distribution(&real_results)?;
        Some(SpecificityReport {
            total_results: d.total,
            contradiction_count: *d.counts.get(&ContradictionType::Contradiction).unwrap_or(&0),
            fractions: d.fractions(),
        })
    };

    // Correlations over patients.
    let recall_vs_turns = {
        let x: Vec<f64> = recall_points.iter().map(|(t, _)| *t).collect();
        let y: Vec<f64> = recall_points.iter().map(|(_, r)| *r).collect();
        pearson(&x, &y).ok()
    };
    let detection_vs_turns = {
        let outcome_by_id: BTreeMap<&str, &ScenarioOutcome> = outcomes3
            .iter()
            .map(|o| (o.scenario_id.as_str(), o))
            .collect();
        let mut per_patient_detection: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for s in inputs.scenarios {
            let slot = per_patient_detection
                .entry(s.patient_id.as_str())
                .or_insert((0, 0));
            slot.0 += 1;
            if outcome_by_id[s.scenario_id.as_str()].detected {
                slot.1 += 1;
            }
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for t in inputs.transcripts {
            if let Some((total, hit)) = per_patient_detection.get(t.patient_id.as_str()) {
                if *total > 0 {
                    x.push(t.patient_turn_count() as f64);
                    y.push(*hit as f64 / *total as f64);
                }
            }
        }
        pearson(&x, &y).ok()
    };

    Ok(EvalReport {
        dim1,
        dim2,
        dim3,
        cascade: cascade_report,
        correlations: Correlations {
            recall_vs_turns,
            detection_vs_turns,
        },
        specificity,
    })
}
