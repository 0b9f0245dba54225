//! Transcript data model shared by the pipeline stages.
//!
//! A patient's corpus is a chronological list of sessions (real coaching
//! sessions plus synthetic reconciliation sessions), each a list of
//! timestamped turns. Files use one JSON object per session (JSONL), one
//! file per patient.

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Patient,
    Coach,
}

impl Speaker {
    pub fn label(&self) -> &'static str {
        match self {
            Speaker::Patient => "PATIENT",
            Speaker::Coach => "COACH",
        }
    }
}

/// One utterance in a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Real,
    Synthetic,
}

/// A ground-truth memory annotation: what the patient said at a turn and
/// what should have been remembered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub event_id: String,
    pub session_id: String,
    pub turn_index: usize,
    pub utterance: String,
    pub memory_content: String,
}

/// One conversation session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub kind: SessionKind,
    pub session_date: NaiveDate,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub gt_events: Vec<GroundTruthEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
}

impl Session {
    pub fn patient_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Patient)
    }

    pub fn patient_turn_count(&self) -> usize {
        self.patient_turns().count()
    }

    /// Turn integrity: non-empty texts, non-decreasing timestamps,
    /// indices 0..n, and ground-truth events pointing at patient turns.
    pub fn validate(&self) -> Result<()> {
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.text.trim().is_empty() {
                return Err(Error::Data(format!(
                    "{}: turn {i} has empty text",
                    self.session_id
                )));
            }
            if turn.turn_index != i {
                return Err(Error::Data(format!(
                    "{}: turn {i} has index {}",
                    self.session_id, turn.turn_index
                )));
            }
            if i > 0 && turn.timestamp < self.turns[i - 1].timestamp {
                return Err(Error::Data(format!(
                    "{}: timestamps decrease at turn {i}",
                    self.session_id
                )));
            }
        }
        for event in &self.gt_events {
            let valid = self
                .turns
                .get(event.turn_index)
                .map(|t| t.speaker == Speaker::Patient)
                .unwrap_or(false);
            if !valid {
                return Err(Error::Data(format!(
                    "{}: ground-truth event {} does not point at a patient turn",
                    self.session_id, event.event_id
                )));
            }
        }
        Ok(())
    }
}

/// Plain dialogue rendering for prompts: one "SPEAKER: text" line per turn.
pub fn render_dialogue(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker.label(), t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Dialogue rendering with turn indices on patient lines, used where a
/// response must cite the turn it came from.
pub fn render_dialogue_indexed(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| match t.speaker {
            Speaker::Patient => format!("[{}] PATIENT: {}", t.turn_index, t.text),
            Speaker::Coach => format!("COACH: {}", t.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A patient's full hybrid transcript: real and synthetic sessions in
/// chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTranscript {
    pub patient_id: String,
    pub sessions: Vec<Session>,
}

impl HybridTranscript {
    /// Chronology plus the synthetic/scenario linkage: session dates never
    /// decrease, and every synthetic session references exactly one
    /// scenario.
    pub fn validate(&self) -> Result<()> {
        for (i, session) in self.sessions.iter().enumerate() {
            session.validate()?;
            if i > 0 && session.session_date < self.sessions[i - 1].session_date {
                return Err(Error::Data(format!(
                    "{}: session dates decrease at {}",
                    self.patient_id, session.session_id
                )));
            }
            if session.kind == SessionKind::Synthetic && session.scenario_id.is_none() {
                return Err(Error::Data(format!(
                    "{}: synthetic session {} has no scenario_id",
                    self.patient_id, session.session_id
                )));
            }
        }
        Ok(())
    }

    pub fn patient_turn_count(&self) -> usize {
        self.sessions.iter().map(Session::patient_turn_count).sum()
    }

    pub fn gt_event_count(&self) -> usize {
        self.sessions.iter().map(|s| s.gt_events.len()).sum()
    }

    /// Full-transcript rendering for the transcript-level judge.
    pub fn render_full(&self) -> String {
        self.sessions
            .iter()
            .map(|s| {
                format!(
                    "=== Session {} ({}) ===\n{}",
                    s.session_id,
                    s.session_date,
                    render_dialogue(&s.turns)
                )
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Write one transcript as `{patient_id}.jsonl` under `dir`.
pub fn write_transcript(dir: &Path, transcript: &HybridTranscript) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.jsonl", transcript.patient_id));
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for session in &transcript.sessions {
        serde_json::to_writer(&mut file, session)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Read one transcript; the patient id is the file stem.
pub fn read_transcript(path: &Path) -> Result<HybridTranscript> {
    let patient_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("bad transcript path {}", path.display())))?
        .to_owned();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut sessions = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        sessions.push(serde_json::from_str::<Session>(&line)?);
    }
    let transcript = HybridTranscript {
        patient_id,
        sessions,
    };
    transcript.validate()?;
    Ok(transcript)
}

/// Read every `*.jsonl` transcript under `dir`, ordered by patient id.
pub fn read_transcript_dir(dir: &Path) -> Result<Vec<HybridTranscript>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_transcript(p)).collect()
}
