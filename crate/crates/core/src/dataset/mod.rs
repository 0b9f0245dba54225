//! Evaluation corpus construction.
//!
//! Raw message logs are segmented into sessions with temporal heuristics,
//! candidate FHIR bundles are scored against patient profiles, and
//! synthetic reconciliation sessions are generated and interleaved
//! chronologically into the real coaching trajectory. Scenario dialogue
//! generation sees the patient's clinical summary; ground-truth memory
//! extraction sees only the finished transcript — that isolation is a
//! checked contract, not a convention.

pub mod demo;

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fhir::{ClinicalStream, CuratedSummary, FhirResourceRef, ResourceKind};
use crate::gateway::schemas::{GtEventsOutput, SessionScript};
use crate::gateway::{ChatRequest, Gateway, SchemaId};
use crate::prompts;
use crate::recon::Severity;
use crate::transcript::{
    render_dialogue, render_dialogue_indexed, GroundTruthEvent, HybridTranscript, Session,
    SessionKind, Speaker, Turn,
};

/// Messages within this gap belong to the same session.
pub const SESSION_GAP: Duration = Duration::hours(4);
/// A session never spans more than this, measured first message to last.
pub const SESSION_SPAN_CAP: Duration = Duration::hours(48);

/// One raw log message, pre-segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMessage {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

/// Segment a sorted message log into sessions: a new session starts when
/// the gap to the previous message exceeds four hours (checked first) or
/// when keeping the message would stretch the session past 48 hours.
pub fn segment_messages(patient_id: &str, messages: &[RawMessage]) -> Result<Vec<Session>> {
    for pair in messages.windows(2) {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(Error::Data(format!(
                "{patient_id}: message log is not sorted by timestamp"
            )));
        }
    }

    let mut groups: Vec<Vec<&RawMessage>> = Vec::new();
    for message in messages {
        let start_new = match groups.last() {
            None => true,
            Some(session) => {
                let last = session.last().expect("non-empty session");
                let first = session.first().expect("non-empty session");
                message.timestamp - last.timestamp > SESSION_GAP
                    || message.timestamp - first.timestamp > SESSION_SPAN_CAP
            }
        };
        if start_new {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("just pushed").push(message);
    }

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(index, group)| Session {
            session_id: format!("{patient_id}_r{index:03}"),
            kind: SessionKind::Real,
            session_date: group[0].timestamp.date_naive(),
            turns: group
                .iter()
                .enumerate()
                .map(|(i, m)| Turn {
                    speaker: m.speaker,
                    text: m.text.clone(),
                    timestamp: m.timestamp,
                    turn_index: i,
                })
                .collect(),
            gt_events: vec![],
            scenario_id: None,
        })
        .collect())
}

/// Target profile for bundle candidate scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub age: f64,
    pub gender: String,
    pub target_condition_codes: BTreeSet<String>,
    pub target_medication_codes: BTreeSet<String>,
}

/// One candidate bundle with the demographics needed for scoring.
#[derive(Debug, Clone)]
pub struct BundleCandidate {
    pub stream: ClinicalStream,
    pub age: f64,
    pub gender: String,
}

/// Per-candidate score breakdown, recorded so rankings are auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate_id: String,
    pub score: f64,
    pub condition_overlap: f64,
    pub medication_overlap: f64,
    pub gender_match: bool,
    pub age_proximity: f64,
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    intersection / union
}

fn codes_of(stream: &ClinicalStream, kind: ResourceKind) -> BTreeSet<String> {
    stream
        .resources()
        .iter()
        .filter(|r| r.resource_type == kind)
        .map(|r| r.code.code_value.clone())
        .collect()
}

/// Rank candidate bundles for a patient profile. The multi-factor score
/// weighs condition overlap 0.4, medication overlap 0.4, gender match
/// 0.1, and age proximity 0.1 (1 - |age difference| / 50, clamped).
pub fn score_bundle_candidates(
    profile: &PatientProfile,
    candidates: &[BundleCandidate],
) -> Result<Vec<CandidateScore>> {
    if candidates.is_empty() {
        return Err(Error::Data("no candidate bundles to score".into()));
    }
    let mut scores: Vec<CandidateScore> = candidates
        .iter()
        .map(|c| {
            let condition_overlap = jaccard(
                &profile.target_condition_codes,
                &codes_of(&c.stream, ResourceKind::Condition),
            );
            let medication_overlap = jaccard(
                &profile.target_medication_codes,
                &codes_of(&c.stream, ResourceKind::MedicationRequest),
            );
            let gender_match = profile.gender.eq_ignore_ascii_case(&c.gender);
            let age_proximity = (1.0 - (profile.age - c.age).abs() / 50.0).clamp(0.0, 1.0);
            CandidateScore {
                candidate_id: c.stream.patient_id().to_owned(),
                score: 0.4 * condition_overlap
                    + 0.4 * medication_overlap
                    + 0.1 * f64::from(gender_match)
                    + 0.1 * age_proximity,
                condition_overlap,
                medication_overlap,
                gender_match,
                age_proximity,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    Ok(scores)
}

/// A designed reconciliation scenario with its ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub patient_id: String,
    pub description: String,
    pub expected_type: ExpectedDiscrepancy,
    pub severity_gt: Severity,
    /// Missing this scenario risks acute harm; orthogonal to severity.
    pub safety_critical: bool,
    pub expected_refs: Vec<FhirResourceRef>,
    pub session_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedDiscrepancy {
    Contradiction,
    GapPatient,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.expected_refs.is_empty() {
            return Err(Error::Data(format!(
                "scenario {} has no expected FHIR references",
                self.scenario_id
            )));
        }
        Ok(())
    }
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let scenarios: Vec<Scenario> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}

pub fn write_scenarios(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(scenarios)? + "\n")?;
    Ok(())
}

/// Merge real and synthetic sessions chronologically; real sessions win
/// date ties, and each list keeps its internal order.
pub fn interleave(
    patient_id: &str,
    real: Vec<Session>,
    synthetic: Vec<Session>,
) -> Result<HybridTranscript> {
    let mut sessions = Vec::with_capacity(real.len() + synthetic.len());
    let mut real_iter = real.into_iter().peekable();
    let mut synth_iter = synthetic.into_iter().peekable();
    loop {
        match (real_iter.peek(), synth_iter.peek()) {
            (Some(r), Some(s)) => {
                if r.session_date <= s.session_date {
                    sessions.push(real_iter.next().expect("peeked"));
                } else {
                    sessions.push(synth_iter.next().expect("peeked"));
                }
            }
            (Some(_), None) => sessions.push(real_iter.next().expect("peeked")),
            (None, Some(_)) => sessions.push(synth_iter.next().expect("peeked")),
            (None, None) => break,
        }
    }
    let transcript = HybridTranscript {
        patient_id: patient_id.to_owned(),
        sessions,
    };
    transcript.validate()?;
    Ok(transcript)
}

/// Dates for a patient's synthetic sessions: midpoints of consecutive
/// real-session gaps, distributed in order. With fewer than two real
/// sessions the dates fall on consecutive days after (or in absence of)
/// the real trajectory.
pub fn assign_scenario_dates(real: &[Session], count: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(count);
    let gaps = real.len().saturating_sub(1);
    for i in 0..count {
        let date = if gaps > 0 {
            let g = i * gaps / count;
            let a = real[g].session_date;
            let b = real[g + 1].session_date;
            a + Duration::days((b - a).num_days() / 2)
        } else if let Some(only) = real.last() {
            only.session_date + Duration::days(1 + i as i64)
        } else {
            NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date") + Duration::days(i as i64)
        };
        dates.push(date);
    }
    dates
}

/// Style exemplars handed to the dialogue generator: the opening real
/// session, or a neutral sample when the patient has none.
pub fn style_exemplars(real: &[Session]) -> String {
    match real.first() {
        Some(session) => render_dialogue(&session.turns),
        None => "COACH: How did the walking go this week?\nPATIENT: Pretty good, I got out most mornings.".to_owned(),
    }
}

/// Build the dialogue-generation request (the FHIR-aware call).
pub fn build_generation_prompt(
    scenario: &Scenario,
    summary: &CuratedSummary,
    style: &str,
    session_date: NaiveDate,
) -> ChatRequest {
    let date_text = session_date.to_string();
    let user = prompts::fill(
        prompts::SESSION_SCRIPT_TEMPLATE,
        &[
            ("scenario_description", scenario.description.as_str()),
            (
                "expected_type",
                match scenario.expected_type {
                    ExpectedDiscrepancy::Contradiction => "contradiction",
                    ExpectedDiscrepancy::GapPatient => "gap_patient",
                },
            ),
            ("clinical_summary", summary.text.as_str()),
            ("style_exemplars", style),
            ("session_date", date_text.as_str()),
        ],
    );
    ChatRequest::new(SchemaId::SessionScript, "", user)
}

/// Generate one synthetic session for a scenario. Consecutive same-speaker
/// turns in the response are merged so the session alternates strictly.
pub fn generate_scenario_session(
    gateway: &dyn Gateway,
    scenario: &Scenario,
    summary: &CuratedSummary,
    style: &str,
    session_date: NaiveDate,
) -> Result<Session> {
    let request = build_generation_prompt(scenario, summary, style, session_date);
    let value = gateway.complete_structured(&request)?;
    let script: SessionScript = serde_json::from_value(value)?;

    let mut merged: Vec<(Speaker, String)> = Vec::new();
    for turn in script.turns {
        match merged.last_mut() {
            Some((speaker, text)) if *speaker == turn.speaker => {
                text.push('\n');
                text.push_str(&turn.text);
            }
            _ => merged.push((turn.speaker, turn.text)),
        }
    }

    let base = session_date
        .and_hms_opt(10, 0, 0)
        .expect("valid time")
        .and_utc();
    let turns: Vec<Turn> = merged
        .into_iter()
        .enumerate()
        .map(|(i, (speaker, text))| Turn {
            speaker,
            text,
            timestamp: base + Duration::minutes(2 * i as i64),
            turn_index: i,
        })
        .collect();

    let session = Session {
        session_id: scenario.session_id.clone(),
        kind: SessionKind::Synthetic,
        session_date,
        turns,
        gt_events: vec![],
        scenario_id: Some(scenario.scenario_id.clone()),
    };
    session.validate()?;
    Ok(session)
}

/// Build the ground-truth extraction request. Takes only the session —
/// clinical records cannot reach this prompt by construction.
pub fn build_gt_prompt(session: &Session) -> ChatRequest {
    let rendered = render_dialogue_indexed(&session.turns);
    let date = session.session_date.to_string();
    let user = prompts::fill(
        prompts::GT_EVENTS_TEMPLATE,
        &[("session_date", date.as_str()), ("session", rendered.as_str())],
    );
    ChatRequest::new(SchemaId::GtEvents, "", user)
}

/// Extract ground-truth memory events for one session (the FHIR-blind
/// call). Events citing an invalid index or a coach turn are dropped.
pub fn gt_extract(gateway: &dyn Gateway, session: &Session) -> Result<Vec<GroundTruthEvent>> {
    let request = build_gt_prompt(session);
    let value = gateway.complete_structured(&request)?;
    let output: GtEventsOutput = serde_json::from_value(value)?;
    Ok(output
        .events
        .into_iter()
        .filter(|e| {
            session
                .turns
                .get(e.turn_index)
                .map(|t| t.speaker == Speaker::Patient)
                .unwrap_or(false)
        })
        .enumerate()
        .map(|(k, e)| GroundTruthEvent {
            event_id: format!("{}_e{k:02}", session.session_id),
            session_id: session.session_id.clone(),
            turn_index: e.turn_index,
            utterance: e.utterance,
            memory_content: e.memory_content,
        })
        .collect())
}

/// Assemble one patient's hybrid transcript: generate a synthetic session
/// per scenario, interleave with the real sessions, then annotate every
/// session (real and synthetic) with ground-truth memory events.
pub fn build_hybrid(
    generation: &dyn Gateway,
    gt: &dyn Gateway,
    patient_id: &str,
    real: Vec<Session>,
    scenarios: &[Scenario],
    summary: &CuratedSummary,
) -> Result<HybridTranscript> {
    for scenario in scenarios {
        scenario.validate()?;
        if scenario.patient_id != patient_id {
            return Err(Error::Data(format!(
                "scenario {} belongs to {}, not {patient_id}",
                scenario.scenario_id, scenario.patient_id
            )));
        }
    }
    let style = style_exemplars(&real);
    let dates = assign_scenario_dates(&real, scenarios.len());
    let mut synthetic = Vec::with_capacity(scenarios.len());
    for (scenario, date) in scenarios.iter().zip(dates) {
        synthetic.push(generate_scenario_session(
            generation, scenario, summary, &style, date,
        )?);
    }
    let mut transcript = interleave(patient_id, real, synthetic)?;
    for session in &mut transcript.sessions {
        session.gt_events = gt_extract(gt, session)?;
    }
    transcript.validate()?;
    Ok(transcript)
}

/// Read a raw message log (JSONL of [`RawMessage`]).
pub fn read_messages(path: &Path) -> Result<Vec<RawMessage>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut messages = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        messages.push(serde_json::from_str(&line)?);
    }
    Ok(messages)
}

pub fn write_messages(path: &Path, messages: &[RawMessage]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for m in messages {
        serde_json::to_writer(&mut file, m)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}
