//! Per-turn delta extraction over fixed transcripts.
//!
//! Replay walks every patient turn of a transcript in order, asks the
//! extraction LLM what changed, applies the delta to the narrative store,
//! and records a per-turn trace entry. The trace is what downstream
//! judging and the coupled reconciliation pass consume: the memory state
//! at any past turn is reconstructed by folding the trace's apply
//! reports, so identical transcripts and fixtures reproduce identical
//! traces byte for byte.

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, SchemaId};
use crate::memory::{fold_reports, ApplyReport, MemoryDelta, MemoryRecord, MemoryStore};
use crate::prompts;
use crate::transcript::{render_dialogue, HybridTranscript, Speaker, Turn};

/// One processed patient turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub session_id: String,
    pub turn_index: usize,
    pub delta: MemoryDelta,
    pub report: ApplyReport,
    /// Record count after this turn; the snapshot reference for judging is
    /// the entry itself (fold the trace up to and including it).
    pub store_len: usize,
}

/// The replay record for one patient: one entry per patient turn, plus the
/// final store state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTrace {
    pub patient_id: String,
    pub entries: Vec<TraceEntry>,
    pub final_records: Vec<MemoryRecord>,
}

impl ReplayTrace {
    /// Memory state after processing entry `index`.
    pub fn state_at(&self, index: usize) -> Vec<MemoryRecord> {
        fold_reports(self.entries[..=index].iter().map(|e| &e.report))
    }

    /// Memory state after the patient turn `(session_id, turn_index)`,
    /// i.e. the state a ground-truth event at that turn is judged against.
    pub fn state_for_turn(&self, session_id: &str, turn_index: usize) -> Option<Vec<MemoryRecord>> {
        let index = self
            .entries
            .iter()
            .position(|e| e.session_id == session_id && e.turn_index == turn_index)?;
        Some(self.state_at(index))
    }

    /// All changed memories, with their session ids, in processing order.
    pub fn changed_memories(&self) -> Vec<(String, MemoryRecord)> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.report
                    .changed
                    .iter()
                    .map(|m| (e.session_id.clone(), m.clone()))
            })
            .collect()
    }
}

/// Extraction call granularity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionOptions {
    /// One call per session (at its last patient turn, over the whole
    /// session) instead of one call per patient turn.
    #[serde(default)]
    pub session_batched: bool,
}

/// Build the extraction request for one turn: the full extraction
/// instructions as system text; session date, the store's extraction
/// view, and the dialogue window so far as user text.
pub fn build_extraction_prompt(
    store: &MemoryStore,
    session_date: NaiveDate,
    turns_so_far: &[Turn],
) -> ChatRequest {
    let user = format!(
        "Session date: {session_date}\n\n=== EXISTING MEMORIES ===\n{}\n\n=== CONVERSATION (this session, through the current turn) ===\n{}",
        store.extraction_view(),
        render_dialogue(turns_so_far),
    );
    ChatRequest::new(SchemaId::MemoryDelta, prompts::EXTRACTION_SYSTEM, user)
}

/// Context for one extraction call: a session and the patient turn to
/// process. The dialogue window is the session's turns up to and
/// including that turn.
#[derive(Debug, Clone, Copy)]
pub struct TurnContext<'a> {
    pub session_id: &'a str,
    pub session_date: NaiveDate,
    pub turns: &'a [Turn],
    pub turn_index: usize,
}

/// Extract and apply the delta for one patient turn.
pub fn extract_turn(
    gateway: &dyn Gateway,
    store: &mut MemoryStore,
    context: TurnContext<'_>,
) -> Result<(MemoryDelta, ApplyReport)> {
    let attach = |source: Error| Error::Turn {
        session_id: context.session_id.to_owned(),
        turn_index: context.turn_index,
        source: Box::new(source),
    };
    let turn = context
        .turns
        .get(context.turn_index)
        .ok_or_else(|| attach(Error::Data("turn index out of range".into())))?;
    if turn.speaker != Speaker::Patient {
        return Err(attach(Error::Data(
            "extraction runs on patient turns only".into(),
        )));
    }
    let request = build_extraction_prompt(
        store,
        context.session_date,
        &context.turns[..=context.turn_index],
    );
    let value = gateway.complete_structured(&request).map_err(attach)?;
    let delta: MemoryDelta = serde_json::from_value(value).map_err(|e| attach(e.into()))?;
    let report = store.apply_delta(&delta, context.session_id, context.session_date);
    Ok((delta, report))
}

/// Replay a full hybrid transcript through extraction.
pub fn replay_transcript(
    gateway: &dyn Gateway,
    transcript: &HybridTranscript,
    options: ExtractionOptions,
) -> Result<ReplayTrace> {
    transcript.validate()?;
    let mut store = MemoryStore::new();
    let mut entries = Vec::new();

    for session in &transcript.sessions {
        let turn_indices: Vec<usize> = if options.session_batched {
            session
                .turns
                .iter()
                .rposition(|t| t.speaker == Speaker::Patient)
                .into_iter()
                .collect()
        } else {
            session
                .turns
                .iter()
                .filter(|t| t.speaker == Speaker::Patient)
                .map(|t| t.turn_index)
                .collect()
        };
        for turn_index in turn_indices {
            let (delta, report) = extract_turn(
                gateway,
                &mut store,
                TurnContext {
                    session_id: &session.session_id,
                    session_date: session.session_date,
                    turns: &session.turns,
                    turn_index,
                },
            )?;
            entries.push(TraceEntry {
                session_id: session.session_id.clone(),
                turn_index,
                delta,
                report,
                store_len: store.len(),
            });
        }
    }

    Ok(ReplayTrace {
        patient_id: transcript.patient_id.clone(),
        entries,
        final_records: store.records().to_vec(),
    })
}

/// Persist a trace: `{pid}.trace.jsonl` (one entry per patient turn),
/// `{pid}.applies.jsonl` (the bare apply-report log), and
/// `{pid}.memories.json` (the final record array).
pub fn write_trace(dir: &Path, trace: &ReplayTrace) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = std::io::BufWriter::new(std::fs::File::create(
        dir.join(format!("{}.trace.jsonl", trace.patient_id)),
    )?);
    for entry in &trace.entries {
        serde_json::to_writer(&mut entries, entry)?;
        entries.write_all(b"\n")?;
    }
    entries.flush()?;

    let mut applies = std::io::BufWriter::new(std::fs::File::create(
        dir.join(format!("{}.applies.jsonl", trace.patient_id)),
    )?);
    for entry in &trace.entries {
        serde_json::to_writer(&mut applies, &entry.report)?;
        applies.write_all(b"\n")?;
    }
    applies.flush()?;

    let memories = serde_json::to_string_pretty(&trace.final_records)?;
    std::fs::write(
        dir.join(format!("{}.memories.json", trace.patient_id)),
        memories + "\n",
    )?;
    Ok(())
}

/// Load a trace written by [`write_trace`]. The final state is re-derived
/// from the entries and checked against the stored record array.
pub fn read_trace(dir: &Path, patient_id: &str) -> Result<ReplayTrace> {
    let path = dir.join(format!("{patient_id}.trace.jsonl"));
    let file = std::io::BufReader::new(std::fs::File::open(&path)?);
    let mut entries = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str::<TraceEntry>(&line)?);
    }
    let final_records = fold_reports(entries.iter().map(|e| &e.report));

    let memories_path = dir.join(format!("{patient_id}.memories.json"));
    if memories_path.exists() {
        let stored: Vec<MemoryRecord> =
            serde_json::from_str(&std::fs::read_to_string(&memories_path)?)?;
        if stored != final_records {
            return Err(Error::Data(format!(
                "{patient_id}: stored memories disagree with the trace log"
            )));
        }
    }

    Ok(ReplayTrace {
        patient_id: patient_id.to_owned(),
        entries,
        final_records,
    })
}

/// Patient ids with a trace in `dir`, sorted.
pub fn list_traces(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            if let Some(pid) = name.strip_suffix(".trace.jsonl") {
                ids.push(pid.to_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}
