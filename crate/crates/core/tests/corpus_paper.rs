//! Reference-scale corpus run: 26 patients, 675 sessions, 2,296 patient
//! turns, with the full three-dimension evaluation and its headline
//! numbers, all under the scripted gateway.

mod common;

use common::run_corpus;
use dsrecon_core::dataset::demo::{generate, DemoConfig};
use dsrecon_core::recon::ContradictionType;
use dsrecon_core::transcript::SessionKind;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() < tol
}

#[test]
fn paper_scale_corpus_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = DemoConfig::paper();
    let manifest = generate(dir.path(), &config).unwrap();

    // Corpus composition.
    assert_eq!(manifest.patients.len(), 26);
    assert_eq!(manifest.real_sessions, 432);
    assert_eq!(manifest.synthetic_sessions, 243);
    assert_eq!(manifest.patient_turns, 2296);
    assert_eq!(manifest.gt_events, 951);
    assert_eq!(manifest.scenarios, 243);

    let run = run_corpus(dir.path(), true);

    // Session totals: 675 interleaved sessions, 432 real plus 243
    // synthetic, in chronological order per patient.
    let total_sessions: usize = run.transcripts.iter().map(|t| t.sessions.len()).sum();
    assert_eq!(total_sessions, 675);
    let real: usize = run
        .transcripts
        .iter()
        .flat_map(|t| &t.sessions)
        .filter(|s| s.kind == SessionKind::Real)
        .count();
    assert_eq!(real, 432);
    assert_eq!(total_sessions - real, 243);

    // 2,296 patient turns processed, one trace entry each.
    let turns: usize = run.traces.values().map(|t| t.entries.len()).sum();
    assert_eq!(turns, 2296);

    // Snapshot monotonicity: the record-count change between consecutive
    // trace entries equals the inserts minus deletes applied that turn.
    use dsrecon_core::memory::OpKind;
    for trace in run.traces.values() {
        let mut previous = 0usize;
        for entry in &trace.entries {
            let inserts = entry
                .report
                .applied
                .iter()
                .filter(|op| op.kind == OpKind::Insert)
                .count();
            let deletes = entry
                .report
                .applied
                .iter()
                .filter(|op| op.kind == OpKind::Delete)
                .count();
            assert_eq!(
                entry.store_len as i64 - previous as i64,
                inserts as i64 - deletes as i64,
                "snapshot delta mismatch at {} turn {}",
                entry.session_id,
                entry.turn_index
            );
            previous = entry.store_len;
        }
    }

    // Ground-truth composition: 522 real + 429 synthetic events; the
    // synthetic mean is about 1.8 per session.
    let synth_events: usize = run
        .transcripts
        .iter()
        .flat_map(|t| &t.sessions)
        .filter(|s| s.kind == SessionKind::Synthetic)
        .map(|s| s.gt_events.len())
        .sum();
    assert_eq!(synth_events, 429);
    let real_events: usize = run
        .transcripts
        .iter()
        .flat_map(|t| &t.sessions)
        .filter(|s| s.kind == SessionKind::Real)
        .map(|s| s.gt_events.len())
        .sum();
    assert_eq!(real_events, 522);
    let synth_mean = synth_events as f64 / 243.0;
    assert!(close(synth_mean, 1.8, 0.05), "synthetic GT mean {synth_mean}");

    // Isolated pass: one result per ground-truth memory of the synthetic
    // sessions.
    assert_eq!(run.dim2.len(), 429);

    let report = run.report.as_ref().unwrap();

    // Extraction quality.
    assert!(close(report.dim1.recall, 0.708, 0.0005), "recall {}", report.dim1.recall);
    assert!(
        close(report.dim1.strict_recall, 0.262, 0.0005),
        "strict {}",
        report.dim1.strict_recall
    );
    assert!(close(report.dim1.faithfulness_mean, 4.8, 0.05));
    assert!(close(report.dim1.deduplication_mean, 3.6, 0.05));
    assert_eq!(report.dim1.total_events, 951);
    assert_eq!(report.dim1.patient_turns, 2296);

    // Isolated reconciliation: 205 of 243 detected.
    assert_eq!(report.dim2.detected_count, 205);
    assert!(close(report.dim2.detection, 0.844, 0.0005));
    assert!(close(report.dim2.resource_informed, 0.765, 0.0005));
    assert!(close(report.dim2.safety_recall.unwrap(), 0.867, 0.0005));
    assert!(close(report.dim2.severity_exact, 0.280, 0.0005));
    assert!(close(report.dim2.severity_within1, 0.815, 0.0005));

    // Of the detected, 29 contradictions and 176 gaps.
    assert_eq!(
        report.dim2.classification.get(&ContradictionType::Contradiction),
        Some(&29)
    );
    assert_eq!(
        report.dim2.classification.get(&ContradictionType::GapPatient),
        Some(&176)
    );

    // Pipeline pass and the cascade: 39 lost, 6 gained, 70.8% detection,
    // a -13.6% paired delta with its bootstrap interval around
    // [-18.9%, -8.6%].
    assert_eq!(report.dim3.detected_count, 172);
    assert!(close(report.dim3.detection, 0.708, 0.0005));
    assert_eq!(report.cascade.lost.len(), 39);
    assert_eq!(report.cascade.gained.len(), 6);
    assert!(close(report.cascade.delta, -0.136, 0.0005));
    assert_eq!(
        report.cascade.dim3_detected,
        report.cascade.dim2_detected - report.cascade.lost.len() + report.cascade.gained.len()
    );
    assert!(
        close(report.cascade.ci_low, -0.189, 0.02),
        "ci_low {}",
        report.cascade.ci_low
    );
    assert!(
        close(report.cascade.ci_high, -0.086, 0.02),
        "ci_high {}",
        report.cascade.ci_high
    );
    assert!(report.cascade.ci_low <= report.cascade.delta);
    assert!(report.cascade.delta <= report.cascade.ci_high);

    // Specificity over real sessions: gaps and routine content only,
    // zero contradictions.
    let specificity = report.specificity.as_ref().unwrap();
    assert_eq!(specificity.contradiction_count, 0);
    assert!(specificity.fractions[&ContradictionType::NoFhir] > 0.5);

    // Per-type rows cover several resource types, and multi-reference
    // scenarios make the counts sum past the scenario total.
    assert!(report.dim2.per_type.len() >= 5);
    let row_total: usize = report.dim2.per_type.iter().map(|r| r.scenarios).sum();
    assert!(row_total > 243, "per-type rows sum to {row_total}");

    // Designed outcomes recorded in the manifest equal the file-driven
    // run.
    let expected = manifest.expected.as_ref().unwrap();
    assert_eq!(expected.dim2_detected, report.dim2.detected_count);
    assert_eq!(expected.dim3_detected, report.dim3.detected_count);
    assert_eq!(expected.recall, report.dim1.recall);
    assert_eq!(expected.detection2, report.dim2.detection);
    assert_eq!(expected.resource_informed2, report.dim2.resource_informed);
}

#[test]
fn paper_scale_replay_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), &DemoConfig::paper()).unwrap();

    let first = run_corpus(dir.path(), false);
    let second = run_corpus(dir.path(), false);

    // Identical transcripts and traces, byte for byte once serialized.
    for (a, b) in first.transcripts.iter().zip(&second.transcripts) {
        assert_eq!(a, b);
    }
    for (pid, trace_a) in &first.traces {
        let trace_b = &second.traces[pid];
        let bytes_a: Vec<String> = trace_a
            .entries
            .iter()
            .map(|e| serde_json::to_string(e).unwrap())
            .collect();
        let bytes_b: Vec<String> = trace_b
            .entries
            .iter()
            .map(|e| serde_json::to_string(e).unwrap())
            .collect();
        assert_eq!(bytes_a, bytes_b, "trace of {pid} not byte-stable");
    }
    assert_eq!(first.dim2, second.dim2);
    assert_eq!(first.dim3, second.dim3);
}
