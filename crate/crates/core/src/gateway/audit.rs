//! Gateway audit log: one JSONL entry per completion attempt.
//!
//! The log serves two purposes: post-hoc inspection (every request and
//! response, with errors), and replay — a finished run's audit log loads
//! straight back into the scripted gateway, reproducing the run's outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::gateway::ChatRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
}

enum Backing {
    Memory(Vec<AuditEntry>),
    File(BufWriter<File>),
}

/// Thread-safe audit sink, either in-memory or streamed to a JSONL file.
pub struct AuditLog {
    backing: Mutex<Backing>,
}

impl AuditLog {
    pub fn in_memory() -> Arc<Self> {
        Arc::new(Self {
            backing: Mutex::new(Backing::Memory(Vec::new())),
        })
    }

    pub fn to_file(path: &Path) -> Result<Arc<Self>> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Arc::new(Self {
            backing: Mutex::new(Backing::File(BufWriter::new(File::create(path)?))),
        }))
    }

    pub fn record(&self, entry: AuditEntry) {
        let mut backing = self.backing.lock().expect("audit lock");
        match &mut *backing {
            Backing::Memory(entries) => entries.push(entry),
            Backing::File(writer) => {
                // Serialization of an already-valid entry cannot fail.
                let line = serde_json::to_string(&entry).expect("serialize audit entry");
                let _ = writeln!(writer, "{line}");
            }
        }
    }

    /// In-memory entries (empty for file-backed logs).
    pub fn entries(&self) -> Vec<AuditEntry> {
        match &*self.backing.lock().expect("audit lock") {
            Backing::Memory(entries) => entries.clone(),
            Backing::File(_) => Vec::new(),
        }
    }

    pub fn flush(&self) {
        if let Backing::File(writer) = &mut *self.backing.lock().expect("audit lock") {
            let _ = writer.flush();
        }
    }
}

/// Read an audit log file back into entries.
pub fn read_audit_log(path: &Path) -> Result<Vec<AuditEntry>> {
    use std::io::BufRead;
    let file = std::io::BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(entries)
}
