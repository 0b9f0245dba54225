//! Audit-log replay: every call a run makes is recorded, and feeding the
//! audit log back through the scripted gateway reproduces the run's
//! outputs exactly.

use dsrecon_core::dataset::demo::{generate, DemoConfig};
use dsrecon_core::dataset::read_messages;
use dsrecon_core::dataset::segment_messages;
use dsrecon_core::extraction::{replay_transcript, ExtractionOptions};
use dsrecon_core::fhir::{curate, parse_bundle, TokenBudget};
use dsrecon_core::gateway::{read_audit_log, AuditLog, FallbackMode, ScriptedGateway};
use dsrecon_core::recon::reconcile_trace;

#[test]
fn audit_log_replay_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), &DemoConfig::small(31)).unwrap();

    let pid = "patient_00";
    let messages = read_messages(&dir.path().join("messages").join(format!("{pid}.jsonl"))).unwrap();
    let real = segment_messages(pid, &messages).unwrap();
    let bundle =
        std::fs::read_to_string(dir.path().join("bundles").join(format!("{pid}.json"))).unwrap();
    let parsed = parse_bundle(&bundle).unwrap();
    let summary = curate(&parsed.stream, TokenBudget::default());
    let scenarios: Vec<dsrecon_core::dataset::Scenario> =
        dsrecon_core::dataset::read_scenarios(&dir.path().join("scenarios.json"))
            .unwrap()
            .into_iter()
            .filter(|s| s.patient_id == pid)
            .collect();

    // First run, with every gateway call audited to a file.
    let audit_path = dir.path().join("audit.jsonl");
    let audit = AuditLog::to_file(&audit_path).unwrap();
    let gateway = ScriptedGateway::load(&dir.path().join("fixture.jsonl"), FallbackMode::Error)
        .unwrap()
        .with_audit(audit.clone());
    let transcript = dsrecon_core::dataset::build_hybrid(
        &gateway, &gateway, pid, real.clone(), &scenarios, &summary,
    )
    .unwrap();
    let trace = replay_transcript(&gateway, &transcript, ExtractionOptions::default()).unwrap();
    let results = reconcile_trace(&gateway, &trace, &parsed.stream, &summary).unwrap();
    audit.flush();

    // Every call recorded, none failed.
    let entries = read_audit_log(&audit_path).unwrap();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|e| e.error.is_none() && e.response.is_some()));

    // Second run, with the audit log itself as the fixture.
    let replayed = ScriptedGateway::load(&audit_path, FallbackMode::Error).unwrap();
    let transcript2 = dsrecon_core::dataset::build_hybrid(
        &replayed, &replayed, pid, real, &scenarios, &summary,
    )
    .unwrap();
    let trace2 = replay_transcript(&replayed, &transcript2, ExtractionOptions::default()).unwrap();
    let results2 = reconcile_trace(&replayed, &trace2, &parsed.stream, &summary).unwrap();

    assert_eq!(transcript, transcript2);
    assert_eq!(
        serde_json::to_string(&trace.entries).unwrap(),
        serde_json::to_string(&trace2.entries).unwrap()
    );
    assert_eq!(
        serde_json::to_string(&results).unwrap(),
        serde_json::to_string(&results2).unwrap()
    );
}
