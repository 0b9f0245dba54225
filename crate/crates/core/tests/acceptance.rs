//! Acceptance suite: format fidelity, oracle equivalence, and invariant
//! checks, all runnable offline with the scripted gateway and shipped
//! synthetic fixtures. One pass/fail line prints per criterion (run with
//! `--nocapture` to see them).

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{fixture_path, run_corpus};
use dsrecon_core::dataset::demo::{generate, DemoConfig};
use dsrecon_core::dataset::{segment_messages, RawMessage, Scenario, SESSION_GAP, SESSION_SPAN_CAP};
use dsrecon_core::eval::{
    cascade, dim_metrics, pearson, score_scenario, specificity_distribution, CascadeOptions,
    ScenarioOutcome,
};
use dsrecon_core::fhir::{curate, parse_bundle, render_summary, FhirResourceRef, TokenBudget};
use dsrecon_core::gateway::{read_audit_log, AuditLog, ChatRequest, FallbackMode, SchemaId, ScriptedGateway};
use dsrecon_core::memory::{
    normalize, Category, MemoryDelete, MemoryDelta, MemoryInsert, MemoryStore, MemoryUpdate, OpKind,
};
use dsrecon_core::recon::{ContradictionType, ReconciliationResult, Severity};
use dsrecon_core::transcript::{Speaker, SessionKind};

fn pass(n: u32, what: &str) {
    println!("acceptance {n}: PASS - {what}");
}

#[test]
fn acceptance_01_summary_rendering_golden() {
    let text = std::fs::read_to_string(fixture_path("sample_patient_bundle.json")).unwrap();
    let parsed = parse_bundle(&text).unwrap();
    let summary = curate(&parsed.stream, TokenBudget::default());
    let rendered = render_summary(&summary);
    let golden = std::fs::read_to_string(fixture_path("sample_patient_summary.golden.txt")).unwrap();
    assert_eq!(rendered, golden, "rendered summary differs from the golden");
    assert_eq!(rendered.as_bytes(), golden.as_bytes());
    pass(1, "sample summary rendering is byte-identical to the frozen golden");
}

#[test]
fn acceptance_02_reconciliation_schema_fidelity() {
    let bundle = std::fs::read_to_string(fixture_path("sample_patient_bundle.json")).unwrap();
    let parsed = parse_bundle(&bundle).unwrap();
    let summary = curate(&parsed.stream, TokenBudget::default());

    let canned: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture_path("sample_recon_output.json")).unwrap())
            .unwrap();
    let memory = dsrecon_core::memory::MemoryRecord {
        memory_id: "mem_004".into(),
        content: "Patient reports a recurring sinus issue is acting up, has a doctor's appointment for it tomorrow, and expects to be prescribed Amoxicillin, noting they have no allergies.".into(),
        category: Category::Health,
        created_at: NaiveDate::from_ymd_opt(2019, 8, 21).unwrap(),
        updated_at: NaiveDate::from_ymd_opt(2019, 8, 21).unwrap(),
        source_session: "s_004".into(),
    };
    let request = dsrecon_core::recon::build_recon_prompt(&memory, &summary).unwrap();
    let mut gateway = ScriptedGateway::new(FallbackMode::Error);
    gateway.script(&request, canned);

    let result =
        dsrecon_core::recon::reconcile(&gateway, &memory, &parsed.stream, &summary, "s_004")
            .unwrap();
    assert_eq!(result.contradiction_type, ContradictionType::GapPatient);
    assert_eq!(result.confidence, 0.95);
    assert_eq!(result.clinical_severity, Severity::Medium);
    assert_eq!(result.fhir_resources_considered.len(), 2);
    assert!(result.cited_unknown.is_empty());
    for reference in &result.fhir_resources_considered {
        assert!(
            parsed.stream.lookup(reference).is_some(),
            "cited reference does not resolve: {reference:?}"
        );
    }
    assert!(result.detected());
    pass(2, "sample engine output parses with both citations resolving against the stream");
}

/// Independent brute-force re-implementation of the 4h-gap/48h-span rules.
fn oracle_boundaries(messages: &[RawMessage]) -> Vec<usize> {
    let mut boundaries = Vec::new();
    let mut start = 0usize;
    for i in 0..messages.len() {
        let is_new = if i == 0 {
            true
        } else {
            let gap = messages[i].timestamp - messages[i - 1].timestamp;
            let span = messages[i].timestamp - messages[start].timestamp;
            gap > SESSION_GAP || span > SESSION_SPAN_CAP
        };
        if is_new {
            boundaries.push(i);
            start = i;
        }
    }
    boundaries
}

#[test]
fn acceptance_03_segmentation_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4801);
    for case in 0..1000 {
        let n = rng.gen_range(1..80);
        let mut t = Utc.with_ymd_and_hms(2019, 3, 4, 8, 0, 0).unwrap();
        let mut messages = Vec::with_capacity(n);
        for i in 0..n {
            // Minutes drawn around both rule thresholds.
            let gap = match rng.gen_range(0..4) {
                0 => rng.gen_range(0..30),
                1 => rng.gen_range(200..280),
                2 => rng.gen_range(235..245),
                _ => rng.gen_range(600..4000),
            };
            t += Duration::minutes(gap);
            messages.push(RawMessage {
                speaker: if i % 2 == 0 { Speaker::Patient } else { Speaker::Coach },
                text: format!("m{i}"),
                timestamp: t,
            });
        }
        let sessions = segment_messages("p", &messages).unwrap();
        let mut starts = Vec::new();
        let mut offset = 0usize;
        for s in &sessions {
            starts.push(offset);
            offset += s.turns.len();
            let span = s.turns.last().unwrap().timestamp - s.turns[0].timestamp;
            assert!(span <= SESSION_SPAN_CAP, "case {case}: session span exceeded");
        }
        assert_eq!(offset, messages.len());
        assert_eq!(starts, oracle_boundaries(&messages), "case {case}: boundaries diverge");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(3, &format!("1,000 random streams match the brute-force oracle in {elapsed:?}"));
}

#[test]
fn acceptance_04_memory_store_property_suite() {
    let vocab = [
        "walks the dog before work",
        "Walks The Dog before work",
        "owns a treadmill",
        "prefers evening walks",
        "has knee pain on long walks",
        "takes a daily multivitamin",
        "goal is five thousand steps",
        "keeps walking shoes at the office",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(90210);
    let base = NaiveDate::from_ymd_opt(2019, 3, 4).unwrap();

    for sequence in 0..10_000u32 {
        let mut store = MemoryStore::new();
        let mut ids_ever: BTreeSet<String> = BTreeSet::new();
        let ops = rng.gen_range(3..14);
        for turn in 0..ops {
            let mut delta = MemoryDelta::default();
            match rng.gen_range(0..5) {
                0 | 1 => delta.inserts.push(MemoryInsert {
                    content: vocab[rng.gen_range(0..vocab.len())].to_owned(),
                    category: Category::ALL[rng.gen_range(0..5)],
                }),
                2 => delta.updates.push(MemoryUpdate {
                    memory_id: format!("mem_{:03}", rng.gen_range(1..10)),
                    new_content: vocab[rng.gen_range(0..vocab.len())].to_owned(),
                    category: Category::ALL[rng.gen_range(0..5)],
                }),
                3 => delta.deletes.push(MemoryDelete {
                    memory_id: format!("mem_{:03}", rng.gen_range(1..10)),
                    justification: String::new(),
                }),
                _ => {
                    delta.inserts.push(MemoryInsert {
                        content: vocab[rng.gen_range(0..vocab.len())].to_owned(),
                        category: Category::Fact,
                    });
                    delta.deletes.push(MemoryDelete {
                        memory_id: format!("mem_{:03}", rng.gen_range(1..6)),
                        justification: String::new(),
                    });
                }
            }
            let report = store.apply_delta(&delta, "s", base + Duration::days(turn as i64));

            assert_eq!(
                report.applied.len() + report.rejected.len(),
                delta.op_count(),
                "sequence {sequence}: applied/rejected do not partition the delta"
            );
            for op in &report.applied {
                if op.kind == OpKind::Insert {
                    assert!(
                        ids_ever.insert(op.memory_id.clone()),
                        "sequence {sequence}: id {} reused",
                        op.memory_id
                    );
                }
            }
            for changed in &report.changed {
                let live = store.get(&changed.memory_id).expect("changed record is live");
                assert_eq!(live.content, changed.content, "sequence {sequence}: changed-set unsound");
            }
        }
        let normalized: Vec<String> = store.records().iter().map(|r| normalize(&r.content)).collect();
        let distinct: BTreeSet<&String> = normalized.iter().collect();
        assert_eq!(
            distinct.len(),
            normalized.len(),
            "sequence {sequence}: duplicate normalized contents"
        );
    }
    pass(4, "10,000 random delta sequences: no duplicates, no id reuse, sound changed sets");
}

/// The handcrafted 20-scenario fixture. Outcomes are built directly as
/// scripted engine outputs; every expected metric below is enumerated by
/// hand in the comments.
fn handcrafted_fixture() -> (Vec<Scenario>, Vec<ScenarioOutcome>, Vec<ScenarioOutcome>) {
    let reference = |t: &str, s: &str, c: &str| FhirResourceRef::new(t, s, c, "");
    let c1 = reference("Condition", "SNOMED-CT", "100");
    let c2 = reference("Condition", "SNOMED-CT", "101");
    let m1 = reference("MedicationRequest", "RxNorm", "200");
    let m2 = reference("MedicationRequest", "RxNorm", "201");
    let a1 = reference("AllergyIntolerance", "SNOMED-CT", "300");
    let o1 = reference("Observation", "LOINC", "400");
    let p1 = reference("Procedure", "SNOMED-CT", "500");
    let i1 = reference("Immunization", "CVX", "600");
    let cp1 = reference("CarePlan", "SNOMED-CT", "700");
    let x1 = reference("Condition", "SNOMED-CT", "901");
    let x2 = reference("Condition", "SNOMED-CT", "902");
    let x3 = reference("Procedure", "SNOMED-CT", "903");
    let u1 = reference("Condition", "SNOMED-CT", "999999");

    use Severity::{High, Low, Medium};
    // (id, expected refs, gt severity, safety)
    let spec: Vec<(&str, Vec<FhirResourceRef>, Severity, bool)> = vec![
        ("sc01", vec![c1.clone(), m1.clone()], Low, true),
        ("sc02", vec![m1.clone()], Medium, true),
        ("sc03", vec![c1.clone(), c2.clone(), m2.clone()], High, false),
        ("sc04", vec![a1.clone()], Low, false),
        ("sc05", vec![c2.clone(), o1.clone()], Medium, false),
        ("sc06", vec![p1.clone()], High, false),
        ("sc07", vec![i1.clone()], Low, false),
        ("sc08", vec![cp1.clone()], High, false),
        ("sc09", vec![m2.clone(), c1.clone()], Medium, false),
        ("sc10", vec![o1.clone()], Low, false),
        ("sc11", vec![c2.clone()], Medium, false),
        ("sc12", vec![m1.clone(), a1.clone()], High, false),
        ("sc13", vec![c1.clone()], Low, true),
        ("sc14", vec![m2.clone()], Medium, true),
        ("sc15", vec![p1.clone()], High, false),
        ("sc16", vec![i1.clone()], Low, false),
        ("sc17", vec![cp1.clone()], Medium, false),
        ("sc18", vec![o1.clone()], High, false),
        ("sc19", vec![a1.clone()], Low, false),
        ("sc20", vec![c2.clone()], Medium, false),
    ];
    let scenarios: Vec<Scenario> = spec
        .iter()
        .map(|(id, refs, severity, safety)| Scenario {
            scenario_id: (*id).to_owned(),
            patient_id: "p1".into(),
            description: format!("handcrafted scenario {id}"),
            expected_type: dsrecon_core::dataset::ExpectedDiscrepancy::GapPatient,
            severity_gt: *severity,
            safety_critical: *safety,
            expected_refs: refs.clone(),
            session_id: format!("{id}_session"),
        })
        .collect();

    let result = |scenario: &Scenario,
                  class: ContradictionType,
                  severity: Severity,
                  considered: Vec<FhirResourceRef>,
                  unknown: Vec<FhirResourceRef>| {
        ReconciliationResult {
            memory_id: format!("{}_m", scenario.scenario_id),
            session_id: scenario.session_id.clone(),
            contradiction_type: class,
            confidence: 0.9,
            clinical_severity: severity,
            justification: String::new(),
            fhir_resources_considered: considered,
            cited_unknown: unknown,
        }
    };

    use ContradictionType::{Contradiction, GapPatient};
    // Isolated-pass results per scenario (sc13..sc20 have none: the
    // engine returned nothing detected for their sessions).
    let dim2_results: Vec<(usize, ReconciliationResult)> = vec![
        // sc01: cites both expected (recall 2/2, precision 2/2), pred low.
        (0, result(&scenarios[0], GapPatient, Low, vec![c1.clone(), m1.clone()], vec![])),
        // sc02: cites expected + one extra (recall 1, precision 1/2), pred medium, contradiction.
        (1, result(&scenarios[1], Contradiction, Medium, vec![m1.clone(), x1.clone()], vec![])),
        // sc03: cites 1 of 3 expected (recall 1/3, precision 1), pred high.
        (2, result(&scenarios[2], GapPatient, High, vec![c1.clone()], vec![])),
        // sc04: exact citation, pred medium (off by one from low).
        (3, result(&scenarios[3], GapPatient, Medium, vec![a1.clone()], vec![])),
        // sc05: one expected + one sibling (recall 1/2, precision 1/2), pred high.
        (4, result(&scenarios[4], GapPatient, High, vec![c2.clone(), x1.clone()], vec![])),
        // sc06: exact, pred medium (off one from high).
        (5, result(&scenarios[5], GapPatient, Medium, vec![p1.clone()], vec![])),
        // sc07: exact, pred high (off two from low).
        (6, result(&scenarios[6], GapPatient, High, vec![i1.clone()], vec![])),
        // sc08: exact, pred low (off two from high).
        (7, result(&scenarios[7], GapPatient, Low, vec![cp1.clone()], vec![])),
        // sc09: both expected + one unresolvable (recall 1, precision 2/3), pred low (off one).
        (8, result(&scenarios[8], GapPatient, Low, vec![m2.clone(), c1.clone()], vec![u1.clone()])),
        // sc10: sibling only (recall 0, precision 0), pred low (exact).
        (9, result(&scenarios[9], GapPatient, Low, vec![x1.clone()], vec![])),
        // sc11: sibling only, pred high (off one from medium).
        (10, result(&scenarios[10], GapPatient, High, vec![x2.clone()], vec![])),
        // sc12: two siblings (recall 0, precision 0/2), pred high (exact).
        (11, result(&scenarios[11], GapPatient, High, vec![x2.clone(), x3.clone()], vec![])),
    ];
    let dim2: Vec<ScenarioOutcome> = scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let session: Vec<ReconciliationResult> = dim2_results
                .iter()
                .filter(|(k, _)| *k == i)
                .map(|(_, r)| r.clone())
                .collect();
            score_scenario(s, &session)
        })
        .collect();

    // Pipeline pass: sc03 and sc07 lost, sc15 gained (cites its expected
    // procedure, pred high = exact), everything else unchanged.
    let dim3: Vec<ScenarioOutcome> = scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let session: Vec<ReconciliationResult> = match i {
                2 | 6 => vec![],
                14 => vec![result(s, GapPatient, High, vec![p1.clone()], vec![])],
                _ => dim2_results
                    .iter()
                    .filter(|(k, _)| *k == i)
                    .map(|(_, r)| r.clone())
                    .collect(),
            };
            score_scenario(s, &session)
        })
        .collect();

    (scenarios, dim2, dim3)
}

#[test]
fn acceptance_05_metric_oracle_equivalence() {
    let (scenarios, dim2, dim3) = handcrafted_fixture();
    let tol = 1e-12;
    let d2 = dim_metrics(&scenarios, &dim2).unwrap();

    // Hand enumeration, isolated pass:
    //   detected: sc01..sc12 -> 12/20
    //   resource-informed: sc01..sc09 (sc10, sc11, sc12 cite siblings) -> 9/20
    //   safety: {sc01, sc02, sc13, sc14}, detected {sc01, sc02} -> 2/4
    //   severity exact: sc01, sc02, sc03, sc10, sc12 -> 5/20
    //   within one: exact + sc04, sc05, sc06, sc09, sc11 -> 10/20
    //   recall mean: (1 + 1 + 1/3 + 1 + 1/2 + 1 + 1 + 1 + 1 + 0 + 0 + 0)/20 = 47/120
    //   precision mean over sc01..sc12: (1 + 1/2 + 1 + 1 + 1/2 + 1 + 1 + 1 + 2/3 + 0 + 0 + 0)/12 = 23/36
    assert!((d2.detection - 12.0 / 20.0).abs() < tol);
    assert!((d2.resource_informed - 9.0 / 20.0).abs() < tol);
    assert!((d2.safety_recall.unwrap() - 2.0 / 4.0).abs() < tol);
    assert!((d2.severity_exact - 5.0 / 20.0).abs() < tol);
    assert!((d2.severity_within1 - 10.0 / 20.0).abs() < tol);
    assert!((d2.resource_recall_mean - 47.0 / 120.0).abs() < tol);
    assert!((d2.resource_precision_mean.unwrap() - 23.0 / 36.0).abs() < tol);
    //   per type (scenarios, detected):
    //   Condition 7/5, MedicationRequest 6/5, AllergyIntolerance 3/2,
    //   Observation 3/2, Procedure 2/1, Immunization 2/1, CarePlan 2/1.
    let row = |name: &str| d2.per_type.iter().find(|r| r.resource_type == name).unwrap();
    assert_eq!(row("Condition").scenarios, 7);
    assert!((row("Condition").detection_rate - 5.0 / 7.0).abs() < tol);
    assert_eq!(row("MedicationRequest").scenarios, 6);
    assert!((row("MedicationRequest").detection_rate - 5.0 / 6.0).abs() < tol);
    assert_eq!(row("AllergyIntolerance").scenarios, 3);
    assert!((row("AllergyIntolerance").detection_rate - 2.0 / 3.0).abs() < tol);
    assert_eq!(row("Observation").scenarios, 3);
    assert_eq!(row("Procedure").scenarios, 2);
    assert!((row("Procedure").detection_rate - 0.5).abs() < tol);
    assert_eq!(row("Immunization").scenarios, 2);
    assert_eq!(row("CarePlan").scenarios, 2);
    //   by ground-truth severity: low 4/7, medium 4/7, high 4/6.
    assert!((d2.detection_by_severity[&Severity::Low] - 4.0 / 7.0).abs() < tol);
    assert!((d2.detection_by_severity[&Severity::Medium] - 4.0 / 7.0).abs() < tol);
    assert!((d2.detection_by_severity[&Severity::High] - 4.0 / 6.0).abs() < tol);

    // Pipeline pass:
    //   detected: 12 - {sc03, sc07} + {sc15} = 11/20
    //   resource-informed: sc01, sc02, sc04, sc05, sc06, sc08, sc09, sc15 -> 8/20
    //   safety detected: still {sc01, sc02} -> 2/4
    //   severity exact: sc01, sc02, sc10, sc12, sc15 -> 5/20
    //   within one: exact + sc04, sc05, sc06, sc09, sc11 -> 10/20
    //   recall mean: (1 + 1 + 1 + 1/2 + 1 + 1 + 1 + 0 + 0 + 0 + 1)/20 = 7.5/20 = 3/8
    //   precision mean over the 11 with citations: (1 + 1/2 + 1 + 1/2 + 1 + 1 + 2/3 + 0 + 0 + 0 + 1)/11 = 20/33
    let d3 = dim_metrics(&scenarios, &dim3).unwrap();
    assert!((d3.detection - 11.0 / 20.0).abs() < tol);
    assert!((d3.resource_informed - 8.0 / 20.0).abs() < tol);
    assert!((d3.safety_recall.unwrap() - 0.5).abs() < tol);
    assert!((d3.severity_exact - 5.0 / 20.0).abs() < tol);
    assert!((d3.severity_within1 - 10.0 / 20.0).abs() < tol);
    assert!((d3.resource_recall_mean - 3.0 / 8.0).abs() < tol);
    assert!((d3.resource_precision_mean.unwrap() - 20.0 / 33.0).abs() < tol);

    pass(5, "all isolated and pipeline metrics equal the hand-enumerated oracle to 1e-12");
}

#[test]
fn acceptance_06_cascade_accounting_and_deterministic_ci() {
    let (_, dim2, dim3) = handcrafted_fixture();
    let options = CascadeOptions::default();

    let first = cascade(&dim2, &dim3, &options).unwrap();
    let second = cascade(&dim2, &dim3, &options).unwrap();

    // Accounting identity: 11 = 12 - 2 + 1.
    assert_eq!(first.dim2_detected, 12);
    assert_eq!(first.dim3_detected, 11);
    assert_eq!(first.lost, vec!["sc03".to_owned(), "sc07".to_owned()]);
    assert_eq!(first.gained, vec!["sc15".to_owned()]);
    assert_eq!(
        first.dim3_detected,
        first.dim2_detected - first.lost.len() + first.gained.len()
    );
    assert!((first.delta - (-0.05)).abs() < 1e-12);

    // Fixed seed: identical interval across consecutive runs, bracketing
    // the point estimate.
    assert_eq!(first, second);
    assert!(first.ci_low <= first.delta && first.delta <= first.ci_high);
    pass(6, "accounting identity holds and the seeded bootstrap interval is run-stable");
}

#[test]
fn acceptance_07_specificity_sanity_on_discrepancy_free_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let config = DemoConfig::real_only(5, 50, 4207);
    generate(dir.path(), &config).unwrap();
    let run = run_corpus(dir.path(), false);

    let sessions: usize = run.transcripts.iter().map(|t| t.sessions.len()).sum();
    assert_eq!(sessions, 50);
    assert!(run
        .transcripts
        .iter()
        .flat_map(|t| &t.sessions)
        .all(|s| s.kind == SessionKind::Real));

    let results: Vec<ReconciliationResult> = run.dim3.iter().map(|(_, r)| r.clone()).collect();
    assert!(!results.is_empty());
    let distribution = specificity_distribution(&results).unwrap();
    assert_eq!(
        distribution.fraction(ContradictionType::Contradiction),
        0.0,
        "contradictions flagged on discrepancy-free sessions"
    );
    let sum: f64 = distribution.fractions().values().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    pass(7, &format!(
        "50 discrepancy-free real sessions, {} results, contradiction fraction exactly 0",
        distribution.total
    ));
}

#[test]
fn acceptance_08_gt_isolation_audit() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), &DemoConfig::paper()).unwrap();

    // Full corpus build with every gateway call audited.
    let audit_path = dir.path().join("audit.jsonl");
    let audit = AuditLog::to_file(&audit_path).unwrap();
    let gateway = ScriptedGateway::load(&dir.path().join("fixture.jsonl"), FallbackMode::Error)
        .unwrap()
        .with_audit(audit.clone());
    let scenarios = dsrecon_core::dataset::read_scenarios(&dir.path().join("scenarios.json")).unwrap();

    let mut summaries = Vec::new();
    let mut message_files: Vec<_> = std::fs::read_dir(dir.path().join("messages"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    message_files.sort();
    for path in &message_files {
        let pid = path.file_stem().unwrap().to_str().unwrap().to_owned();
        let messages = dsrecon_core::dataset::read_messages(path).unwrap();
        let real = segment_messages(&pid, &messages).unwrap();
        let bundle =
            std::fs::read_to_string(dir.path().join("bundles").join(format!("{pid}.json"))).unwrap();
        let parsed = parse_bundle(&bundle).unwrap();
        let summary = curate(&parsed.stream, TokenBudget::default());
        let patient_scenarios: Vec<Scenario> = scenarios
            .iter()
            .filter(|s| s.patient_id == pid)
            .cloned()
            .collect();
        dsrecon_core::dataset::build_hybrid(
            &gateway,
            &gateway,
            &pid,
            real,
            &patient_scenarios,
            &summary,
        )
        .unwrap();
        summaries.push(summary);
    }
    audit.flush();

    // String-containment check: no line of any clinical summary may
    // appear in any ground-truth extraction request.
    let summary_lines: Vec<&str> = summaries
        .iter()
        .flat_map(|s| s.text.lines())
        .filter(|l| !l.trim().is_empty())
        .collect();
    assert!(!summary_lines.is_empty());

    let entries = read_audit_log(&audit_path).unwrap();
    let gt_requests: Vec<&ChatRequest> = entries
        .iter()
        .filter(|e| e.request.schema_id == SchemaId::GtEvents)
        .map(|e| &e.request)
        .collect();
    assert_eq!(gt_requests.len(), 675, "one GT call per session expected");

    let mut hits = 0usize;
    for request in &gt_requests {
        for line in &summary_lines {
            if request.user_text.contains(line) || request.system_text.contains(line) {
                hits += 1;
            }
        }
    }
    assert_eq!(hits, 0, "clinical summary text leaked into GT extraction requests");
    pass(8, &format!(
        "{} GT requests x {} summary lines: zero containment hits",
        gt_requests.len(),
        summary_lines.len()
    ));
}

#[test]
fn acceptance_09_pearson_cross_check() {
    // Exact endpoints.
    let x: Vec<f64> = (0..26).map(|i| 0.37 * i as f64 - 2.21).collect();
    let y_pos = x.clone();
    let y_neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_eq!(pearson(&x, &y_pos).unwrap().r, 1.0);
    assert_eq!(pearson(&x, &y_neg).unwrap().r, -1.0);

    // 26-point fixture against an independent formula arrangement.
    let xs: Vec<f64> = (0..26)
        .map(|i| (i as f64 * 0.83).sin() * 4.0 + 0.9 * i as f64)
        .collect();
    let ys: Vec<f64> = (0..26)
        .map(|i| (i as f64 * 0.29).cos() * 2.0 - 0.4 * i as f64 + (i as f64 * 0.11).sin())
        .collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    let sxx: f64 = xs.iter().map(|a| a * a).sum();
    let syy: f64 = ys.iter().map(|b| b * b).sum();
    let independent = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    let ours = pearson(&xs, &ys).unwrap();
    assert!(
        (ours.r - independent).abs() < 1e-9,
        "{} vs {independent}",
        ours.r
    );
    assert!(ours.p > 0.0 && ours.p < 1.0);
    pass(9, "r equals the independent arrangement to 1e-9; endpoints are exact");
}

/// Live smoke over any OpenAI-compatible endpoint. Enabled only when
/// DSRECON_LIVE_SMOKE=1 with DSRECON_API_KEY (and optionally
/// DSRECON_ENDPOINT / DSRECON_MODEL) set; asserts a complete report with
/// no schema violations, no numeric targets.
#[test]
fn acceptance_10_live_smoke() {
    if std::env::var("DSRECON_LIVE_SMOKE").ok().as_deref() != Some("1") {
        println!("acceptance 10: SKIPPED (set DSRECON_LIVE_SMOKE=1 with DSRECON_API_KEY to run)");
        return;
    }
    use dsrecon_core::gateway::{GatewayConfig, HttpGateway};

    let dir = tempfile::tempdir().unwrap();
    let config = DemoConfig {
        patients: 1,
        real_sessions: 3,
        synthetic_sessions: 2,
        patient_turns: 14,
        gt_real: 4,
        gt_synth: 3,
        dim2_detected: 1,
        resource_informed: 1,
        safety_total: 1,
        safety_detected: 1,
        severity_exact: 1,
        severity_within1: 1,
        lost: 0,
        lost_safety: 0,
        gained: 0,
        contradiction_detected: 0,
        verdict_match: 3,
        verdict_partial: 3,
        severity_mix: (1, 1, 0),
        faithfulness_fives: 1,
        dedup_fours: 1,
        seed: 5,
    };
    generate(dir.path(), &config).unwrap();

    let gateway_config = GatewayConfig {
        endpoint_url: std::env::var("DSRECON_ENDPOINT")
            .unwrap_or_else(|_| "https://api.openai.com/v1".into()),
        model_name: std::env::var("DSRECON_MODEL").unwrap_or_else(|_| "gpt-4o".into()),
        ..Default::default()
    };
    let live = HttpGateway::new(gateway_config).unwrap();

    let pid = "patient_00";
    let messages =
        dsrecon_core::dataset::read_messages(&dir.path().join("messages").join(format!("{pid}.jsonl")))
            .unwrap();
    let real = segment_messages(pid, &messages).unwrap();
    let bundle =
        std::fs::read_to_string(dir.path().join("bundles").join(format!("{pid}.json"))).unwrap();
    let parsed = parse_bundle(&bundle).unwrap();
    let summary = curate(&parsed.stream, TokenBudget::default());
    let scenarios = dsrecon_core::dataset::read_scenarios(&dir.path().join("scenarios.json")).unwrap();

    let transcript =
        dsrecon_core::dataset::build_hybrid(&live, &live, pid, real, &scenarios, &summary).unwrap();
    assert!(transcript.sessions.len() <= 5);
    let trace = dsrecon_core::extraction::replay_transcript(
        &live,
        &transcript,
        dsrecon_core::extraction::ExtractionOptions::default(),
    )
    .unwrap();
    let dim2: Vec<(String, ReconciliationResult)> =
        dsrecon_core::recon::reconcile_gt_memories(&live, &transcript, &parsed.stream, &summary)
            .unwrap()
            .into_iter()
            .map(|r| (pid.to_owned(), r))
            .collect();
    let dim3: Vec<(String, ReconciliationResult)> =
        dsrecon_core::recon::reconcile_trace(&live, &trace, &parsed.stream, &summary)
            .unwrap()
            .into_iter()
            .map(|r| (pid.to_owned(), r))
            .collect();
    let mut traces = std::collections::BTreeMap::new();
    traces.insert(pid.to_owned(), trace);
    let report = dsrecon_core::eval::evaluate(
        &live,
        &dsrecon_core::eval::EvalInputs {
            transcripts: &[transcript],
            scenarios: &scenarios,
            traces: &traces,
            dim2_results: &dim2,
            dim3_results: &dim3,
        },
        &CascadeOptions::default(),
    )
    .unwrap();
    assert!(report.dim1.recall >= 0.0 && report.dim1.recall <= 1.0);
    assert!(report.dim2.detection >= 0.0 && report.dim2.detection <= 1.0);
    pass(10, "live end-to-end run completed with a full report and no schema violations");
}
