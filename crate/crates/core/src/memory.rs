//! Narrative stream: the mutable store of patient-reported memories.
//!
//! The store changes only through explicit delta operations. Guards keep
//! it coherent against LLM bookkeeping errors: exact-duplicate inserts are
//! rejected, updates against fabricated IDs are coerced to inserts (never
//! lose patient information), deletes against unknown IDs are dropped, and
//! IDs are never reused. Every applied operation lands in an internal
//! append-only log, so any past state can be reconstructed on demand
//! instead of holding full copies per turn.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Memory category, for organization only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Preference,
    Health,
    Lifestyle,
    Medication,
    Fact,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Preference,
        Category::Health,
        Category::Lifestyle,
        Category::Medication,
        Category::Fact,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Preference => "preference",
            Category::Health => "health",
            Category::Lifestyle => "lifestyle",
            Category::Medication => "medication",
            Category::Fact => "fact",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single piece of patient-reported information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub memory_id: String,
    pub content: String,
    pub category: Category,
    pub created_at: NaiveDate,
    pub updated_at: NaiveDate,
    pub source_session: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryInsert {
    pub content: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUpdate {
    pub memory_id: String,
    pub new_content: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryDelete {
    pub memory_id: String,
    #[serde(default)]
    pub justification: String,
}

/// The per-turn delta: explicit insert/update/delete operations instead of
/// a rewritten memory state. All lists may be empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryDelta {
    #[serde(default)]
    pub inserts: Vec<MemoryInsert>,
    #[serde(default)]
    pub updates: Vec<MemoryUpdate>,
    #[serde(default)]
    pub deletes: Vec<MemoryDelete>,
}

impl MemoryDelta {
    pub fn is_empty(&self) -> bool {
        self.inserts.is_empty() && self.updates.is_empty() && self.deletes.is_empty()
    }

    pub fn op_count(&self) -> usize {
        self.inserts.len() + self.updates.len() + self.deletes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Insert,
    Update,
    Delete,
}

/// One delta operation that changed the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedOp {
    pub kind: OpKind,
    pub memory_id: String,
    /// Anomaly flag, e.g. "unknown-id-coerced" for an update that became
    /// an insert.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One delta operation the guards refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedOp {
    pub kind: OpKind,
    pub reason: String,
    pub detail: String,
}

/// Outcome of applying one delta. `applied` and `rejected` partition the
/// delta's operations; `changed` holds the post-apply state of every
/// record inserted or updated this turn (the set the reconciliation
/// engine consumes).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub applied: Vec<AppliedOp>,
    pub rejected: Vec<RejectedOp>,
    pub changed: Vec<MemoryRecord>,
}

/// Replayable log entry for one applied operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum LogOp {
    Insert { record: MemoryRecord },
    Update { record: MemoryRecord },
    Delete { memory_id: String },
}

/// A store position marker; materialize it with [`MemoryStore::restore`]
/// or [`MemoryStore::records_at`]. Snapshots are immutable and freely
/// shareable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub ops: usize,
}

/// The narrative memory store for one patient. Single writer per patient;
/// distinct patients' stores are independent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    records: Vec<MemoryRecord>,
    next_id: u64,
    log: Vec<LogOp>,
}

/// Case-fold and collapse whitespace; the exact-match guard key.
pub fn normalize(content: &str) -> String {
    content
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, memory_id: &str) -> Option<&MemoryRecord> {
        self.records.iter().find(|r| r.memory_id == memory_id)
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("mem_{:03}", self.next_id)
    }

    /// Apply one delta under the guard rules. Deletes run first, then
    /// updates, then inserts; anomalies surface in the report, never as
    /// errors.
    pub fn apply_delta(
        &mut self,
        delta: &MemoryDelta,
        session_id: &str,
        session_date: NaiveDate,
    ) -> ApplyReport {
        let mut report = ApplyReport::default();
        let mut changed: BTreeMap<String, MemoryRecord> = BTreeMap::new();

        for del in &delta.deletes {
            match self.records.iter().position(|r| r.memory_id == del.memory_id) {
                Some(pos) => {
                    self.records.remove(pos);
                    changed.remove(&del.memory_id);
                    self.log.push(LogOp::Delete {
                        memory_id: del.memory_id.clone(),
                    });
                    report.applied.push(AppliedOp {
                        kind: OpKind::Delete,
                        memory_id: del.memory_id.clone(),
                        note: None,
                    });
                }
                None => report.rejected.push(RejectedOp {
                    kind: OpKind::Delete,
                    reason: "unknown-id".into(),
                    detail: del.memory_id.clone(),
                }),
            }
        }

        for up in &delta.updates {
            if up.new_content.trim().is_empty() {
                report.rejected.push(RejectedOp {
                    kind: OpKind::Update,
                    reason: "empty-content".into(),
                    detail: up.memory_id.clone(),
                });
                continue;
            }
            let Some(pos) = self.records.iter().position(|r| r.memory_id == up.memory_id) else {
                // Fabricated or stale ID: keep the information as an insert.
                self.try_insert(
                    &up.new_content,
                    up.category,
                    session_id,
                    session_date,
                    OpKind::Update,
                    Some("unknown-id-coerced".into()),
                    &mut report,
                    &mut changed,
                );
                continue;
            };
            let norm = normalize(&up.new_content);
            let collides = self
                .records
                .iter()
                .any(|r| r.memory_id != up.memory_id && normalize(&r.content) == norm);
            if collides {
                report.rejected.push(RejectedOp {
                    kind: OpKind::Update,
                    reason: "exact-duplicate".into(),
                    detail: up.new_content.clone(),
                });
                continue;
            }
            let record = &mut self.records[pos];
            record.content = up.new_content.clone();
            record.category = up.category;
            record.updated_at = session_date.max(record.created_at);
            let snapshot = record.clone();
            self.log.push(LogOp::Update {
                record: snapshot.clone(),
            });
            report.applied.push(AppliedOp {
                kind: OpKind::Update,
                memory_id: up.memory_id.clone(),
                note: None,
            });
            changed.insert(up.memory_id.clone(), snapshot);
        }

        for ins in &delta.inserts {
            self.try_insert(
                &ins.content,
                ins.category,
                session_id,
                session_date,
                OpKind::Insert,
                None,
                &mut report,
                &mut changed,
            );
        }

        report.changed = changed.into_values().collect();
        report
            .changed
            .sort_by(|a, b| a.memory_id.cmp(&b.memory_id));
        report
    }

    #[allow(clippy::too_many_arguments)]
    fn try_insert(
        &mut self,
        content: &str,
        category: Category,
        session_id: &str,
        session_date: NaiveDate,
        origin: OpKind,
        note: Option<String>,
        report: &mut ApplyReport,
        changed: &mut BTreeMap<String, MemoryRecord>,
    ) {
        if content.trim().is_empty() {
            report.rejected.push(RejectedOp {
                kind: origin,
                reason: "empty-content".into(),
                detail: String::new(),
            });
            return;
        }
        let norm = normalize(content);
        if self.records.iter().any(|r| normalize(&r.content) == norm) {
            report.rejected.push(RejectedOp {
                kind: origin,
                reason: "exact-duplicate".into(),
                detail: content.to_owned(),
            });
            return;
        }
        let record = MemoryRecord {
            memory_id: self.fresh_id(),
            content: content.to_owned(),
            category,
            created_at: session_date,
            updated_at: session_date,
            source_session: session_id.to_owned(),
        };
        self.records.push(record.clone());
        self.log.push(LogOp::Insert {
            record: record.clone(),
        });
        report.applied.push(AppliedOp {
            kind: OpKind::Insert,
            memory_id: record.memory_id.clone(),
            note,
        });
        changed.insert(record.memory_id.clone(), record);
    }

    /// The view handed to the extraction LLM: IDs and metadata for precise
    /// editing, one line per record.
    pub fn extraction_view(&self) -> String {
        extraction_view_of(&self.records)
    }

    /// The clean, categorized view for the downstream agent or
    /// practitioner: no IDs, no metadata.
    pub fn clean_view(&self) -> String {
        clean_view_of(&self.records)
    }

    /// Mark the current position. O(1); the state is reconstructed on
    /// demand from the store's operation log.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            ops: self.log.len(),
        }
    }

    /// Rebuild the store as it was at `snapshot` by replaying the log
    /// prefix.
    pub fn restore(&self, snapshot: &Snapshot) -> MemoryStore {
        let upto = snapshot.ops.min(self.log.len());
        let mut store = MemoryStore::new();
        for op in &self.log[..upto] {
            store.replay(op);
        }
        store
    }

    /// The records as of `snapshot`, in creation order.
    pub fn records_at(&self, snapshot: &Snapshot) -> Vec<MemoryRecord> {
        self.restore(snapshot).records
    }

    fn replay(&mut self, op: &LogOp) {
        match op {
            LogOp::Insert { record } => {
                self.records.push(record.clone());
                self.next_id += 1;
                self.log.push(op.clone());
            }
            LogOp::Update { record } => {
                if let Some(r) = self
                    .records
                    .iter_mut()
                    .find(|r| r.memory_id == record.memory_id)
                {
                    *r = record.clone();
                }
                self.log.push(op.clone());
            }
            LogOp::Delete { memory_id } => {
                self.records.retain(|r| r.memory_id != *memory_id);
                self.log.push(op.clone());
            }
        }
    }
}

/// Records ordered by creation date, then id.
fn ordered(records: &[MemoryRecord]) -> Vec<&MemoryRecord> {
    let mut rs: Vec<&MemoryRecord> = records.iter().collect();
    rs.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then_with(|| a.memory_id.cmp(&b.memory_id))
    });
    rs
}

/// Extraction view over a bare record set (see
/// [`MemoryStore::extraction_view`]).
pub fn extraction_view_of(records: &[MemoryRecord]) -> String {
    if records.is_empty() {
        return "(no existing memories)".to_owned();
    }
    ordered(records)
        .into_iter()
        .map(|r| {
            format!(
                "[{}] ({}, updated: {}) {}",
                r.memory_id, r.category, r.updated_at, r.content
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Clean view over a bare record set (see [`MemoryStore::clean_view`]).
pub fn clean_view_of(records: &[MemoryRecord]) -> String {
    if records.is_empty() {
        return String::new();
    }
    let ordered = ordered(records);
    let mut sections = Vec::new();
    for category in Category::ALL {
        let lines: Vec<String> = ordered
            .iter()
            .filter(|r| r.category == category)
            .map(|r| format!("- {}", r.content))
            .collect();
        if !lines.is_empty() {
            sections.push(format!(
                "{}:\n{}",
                category.as_str().to_uppercase(),
                lines.join("\n")
            ));
        }
    }
    format!("{}\n", sections.join("\n\n"))
}

/// Rebuild the record set implied by a sequence of apply reports (the
/// serialized delta log). Used when re-materializing states from files.
pub fn fold_reports<'a>(reports: impl IntoIterator<Item = &'a ApplyReport>) -> Vec<MemoryRecord> {
    let mut records: Vec<MemoryRecord> = Vec::new();
    for report in reports {
        let by_id: BTreeMap<&str, &MemoryRecord> = report
            .changed
            .iter()
            .map(|r| (r.memory_id.as_str(), r))
            .collect();
        for op in &report.applied {
            match op.kind {
                OpKind::Delete => records.retain(|r| r.memory_id != op.memory_id),
                OpKind::Insert | OpKind::Update => {
                    if let Some(new_state) = by_id.get(op.memory_id.as_str()) {
                        match records.iter_mut().find(|r| r.memory_id == op.memory_id) {
                            Some(existing) => *existing = (*new_state).clone(),
                            None => records.push((*new_state).clone()),
                        }
                    }
                }
            }
        }
    }
    records
}
