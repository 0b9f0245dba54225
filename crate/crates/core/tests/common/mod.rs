//! Shared helpers for the integration suites: golden-file comparison and
//! a file-driven corpus run that mirrors the operator command flow.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dsrecon_core::dataset;
use dsrecon_core::eval::{self, CascadeOptions, EvalInputs, EvalReport};
use dsrecon_core::extraction::{self, ExtractionOptions, ReplayTrace};
use dsrecon_core::fhir::{self, ClinicalStream, CuratedSummary, TokenBudget};
use dsrecon_core::gateway::{FallbackMode, Gateway, ScriptedGateway};
use dsrecon_core::recon::{self, ReconciliationResult};
use dsrecon_core::transcript::HybridTranscript;

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Compare against a frozen golden file; set UPDATE_GOLDENS=1 to rewrite.
#[allow(dead_code)]
pub fn assert_golden(name: &str, actual: &str) {
    let path = fixture_path(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {name} ({e}); run with UPDATE_GOLDENS=1"));
    assert_eq!(
        actual, expected,
        "output does not match frozen golden {name}"
    );
}

/// Everything a corpus run produces, for assertions.
#[allow(dead_code)]
pub struct CorpusRun {
    pub transcripts: Vec<HybridTranscript>,
    pub streams: BTreeMap<String, (ClinicalStream, CuratedSummary)>,
    pub traces: BTreeMap<String, ReplayTrace>,
    pub dim2: Vec<(String, ReconciliationResult)>,
    pub dim3: Vec<(String, ReconciliationResult)>,
    pub report: Option<EvalReport>,
}

/// Drive the full pipeline from a generated corpus directory exactly the
/// way the CLI does: segment the message logs, build hybrid transcripts,
/// replay extraction, run both reconciliation passes, then evaluate.
#[allow(dead_code)]
pub fn run_corpus(dir: &Path, evaluate: bool) -> CorpusRun {
    let fixture = ScriptedGateway::load(&dir.join("fixture.jsonl"), FallbackMode::Error).unwrap();
    let scenarios = if dir.join("scenarios.json").exists() {
        dataset::read_scenarios(&dir.join("scenarios.json")).unwrap()
    } else {
        Vec::new()
    };

    let mut message_files: Vec<PathBuf> = std::fs::read_dir(dir.join("messages"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    message_files.sort();

    let mut streams = BTreeMap::new();
    let mut transcripts = Vec::new();
    let mut traces = BTreeMap::new();
    let mut dim2 = Vec::new();
    let mut dim3 = Vec::new();

    for path in &message_files {
        let pid = path.file_stem().unwrap().to_str().unwrap().to_owned();
        let messages = dataset::read_messages(path).unwrap();
        let real = dataset::segment_messages(&pid, &messages).unwrap();
        let bundle_text =
            std::fs::read_to_string(dir.join("bundles").join(format!("{pid}.json"))).unwrap();
        let parsed = fhir::parse_bundle(&bundle_text).unwrap();
        let summary = fhir::curate(&parsed.stream, TokenBudget::default());
        let patient_scenarios: Vec<dataset::Scenario> = scenarios
            .iter()
            .filter(|s| s.patient_id == pid)
            .cloned()
            .collect();
        let transcript = dataset::build_hybrid(
            &fixture,
            &fixture,
            &pid,
            real,
            &patient_scenarios,
            &summary,
        )
        .unwrap();
        let trace =
            extraction::replay_transcript(&fixture, &transcript, ExtractionOptions::default())
                .unwrap();
        for r in recon::reconcile_gt_memories(&fixture, &transcript, &parsed.stream, &summary)
            .unwrap()
        {
            dim2.push((pid.clone(), r));
        }
        for r in recon::reconcile_trace(&fixture, &trace, &parsed.stream, &summary).unwrap() {
            dim3.push((pid.clone(), r));
        }
        streams.insert(pid.clone(), (parsed.stream, summary));
        traces.insert(pid.clone(), trace);
        transcripts.push(transcript);
    }

    let report = if evaluate && !scenarios.is_empty() {
        Some(
            eval::evaluate(
                &fixture as &dyn Gateway,
                &EvalInputs {
                    transcripts: &transcripts,
                    scenarios: &scenarios,
                    traces: &traces,
                    dim2_results: &dim2,
                    dim3_results: &dim3,
                },
                &CascadeOptions::default(),
            )
            .unwrap(),
        )
    } else {
        None
    };

    CorpusRun {
        transcripts,
        streams,
        traces,
        dim2,
        dim3,
        report,
    }
}
